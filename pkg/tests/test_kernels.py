import numpy as np
import pytest

from mbe_bdf2.kernels import (
    Bdf2Kernels,
    StabilityError,
    apply_d2,
    audit_doc_kernels,
    bdf2_coefficients,
    coefficients_from_steps,
    compute_m_r,
    doc_table_closed_form,
    doc_table_recursive,
    kernel_matrices,
    m_r_levels,
    quadratic_form_lower_bound_check,
    tridiagonal_eigenvalues,
    verify_orthogonality,
)
from mbe_bdf2.time_mesh import TimeMesh, random_s1_mesh, uniform_mesh


def test_uniform_coefficients_are_classical_bdf2():
    mesh = uniform_mesh(1.0, 4)
    tau = 0.25
    assert bdf2_coefficients(mesh, 1) == pytest.approx((1 / tau, 0.0))
    b0, b1 = bdf2_coefficients(mesh, 3)
    assert b0 == pytest.approx(1.5 / tau)
    assert b1 == pytest.approx(-0.5 / tau)
    kern = Bdf2Kernels.from_mesh(mesh)
    np.testing.assert_allclose(kern.b0, [4.0, 6.0, 6.0, 6.0])
    np.testing.assert_allclose(kern.b1, [0.0, -2.0, -2.0, -2.0])


def test_coefficients_from_steps_match_mesh():
    mesh = TimeMesh([0.0, 0.1, 0.3])
    assert coefficients_from_steps(0.2, 0.1) == pytest.approx(bdf2_coefficients(mesh, 2))
    assert coefficients_from_steps(0.1, None) == (10.0, 0.0)


def test_d2_is_exact_on_quadratics():
    mesh = random_s1_mesh(1.0, 30, 3)
    kern = Bdf2Kernels.from_mesh(mesh)
    t = mesh.levels
    v = 1.0 + 2.0 * t - 3.0 * t**2
    for n in range(2, mesh.N + 1):
        assert apply_d2(kern, v, n) == pytest.approx(2.0 - 6.0 * t[n], rel=1e-9, abs=1e-9)


def test_apply_d2_validates():
    kern = Bdf2Kernels.from_mesh(uniform_mesh(1.0, 3))
    with pytest.raises(IndexError):
        apply_d2(kern, [0, 1, 2, 3], 4)
    with pytest.raises(ValueError):
        apply_d2(kern, [0, 1], 3)


def test_doc_table_two_level_hand_values():
    mesh = TimeMesh([0.0, 1.0, 3.0])  # r2 = 2
    theta = doc_table_recursive(mesh).theta
    b0_2 = 5.0 / (2.0 * 3.0)
    assert theta[0, 0] == pytest.approx(1.0)
    assert theta[1, 1] == pytest.approx(1 / b0_2)
    assert theta[1, 0] == pytest.approx(4.0 / 5.0)
    assert theta[0, 1] == 0.0


def test_doc_recursion_matches_closed_form(s1_meshes):
    for mesh in s1_meshes:
        rec = doc_table_recursive(mesh).theta
        closed = doc_table_closed_form(mesh).theta
        mask = closed != 0
        np.testing.assert_allclose(rec[mask], closed[mask], rtol=1e-12)


def test_doc_orthogonality_and_row_sums(s1_meshes):
    for mesh in s1_meshes:
        kern = Bdf2Kernels.from_mesh(mesh)
        table = doc_table_recursive(mesh)
        assert verify_orthogonality(kern, table) < 1e-12
        np.testing.assert_allclose(table.row_sums(), mesh.steps, rtol=1e-12)
        # double sum telescopes to t_n
        np.testing.assert_allclose(np.cumsum(table.row_sums()), mesh.levels[1:], rtol=1e-12)


def test_doc_entries_positive(s1_meshes):
    for mesh in s1_meshes:
        theta = doc_table_closed_form(mesh).theta
        lower = theta[np.tril_indices(mesh.N)]
        assert np.all(lower >= 0)
        assert np.all(np.diag(theta) > 0)


def test_doc_table_entry_and_convolve():
    mesh = uniform_mesh(1.0, 5)
    table = doc_table_recursive(mesh)
    assert table.entry(3, 3) == pytest.approx(table.theta[2, 2])
    with pytest.raises(IndexError):
        table.entry(2, 3)
    vals = np.arange(1.0, 6.0)
    np.testing.assert_allclose(table.convolve(vals), table.theta @ vals)
    fields = np.ones((5, 2, 2))
    assert table.convolve(fields).shape == (5, 2, 2)


def test_orthogonality_size_mismatch():
    with pytest.raises(ValueError):
        verify_orthogonality(Bdf2Kernels.from_mesh(uniform_mesh(1.0, 3)), doc_table_recursive(uniform_mesh(1.0, 4)))


def test_quadratic_form_lower_bound():
    rng = np.random.default_rng(0)
    mesh = uniform_mesh(1.0, 40)
    check = quadratic_form_lower_bound_check(mesh, rng.standard_normal(40))
    assert check.holds and check.pointwise_holds
    zero = quadratic_form_lower_bound_check(mesh, np.zeros(40))
    assert zero.lhs == 0.0 and zero.rhs == 0.0 and zero.holds
    for seed in range(5):
        m = random_s1_mesh(1.0, 60, seed)
        assert quadratic_form_lower_bound_check(m, rng.standard_normal(60)).holds
    with pytest.raises(ValueError):
        quadratic_form_lower_bound_check(mesh, np.ones(3))


def test_kernel_matrices_positive_definite(s1_meshes):
    for mesh in s1_meshes[:8]:
        mats = kernel_matrices(mesh)
        assert np.linalg.eigvalsh(mats.B).min() > 0
        assert np.linalg.eigvalsh(mats.Theta2 + mats.Theta2.T).min() > 0
        assert np.linalg.eigvalsh(mats.Btilde).min() > 0
        # Theta2 is the inverse of B2
        np.testing.assert_allclose(mats.Theta2 @ mats.B2, np.eye(mesh.N), atol=1e-10)


def test_tridiagonal_eigenvalues_match_dense():
    rng = np.random.default_rng(1)
    d = rng.uniform(1, 3, 12)
    e = rng.uniform(-1, 1, 11)
    dense = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    ref = np.linalg.eigvalsh(dense)
    np.testing.assert_allclose(tridiagonal_eigenvalues(d, e), ref, rtol=1e-12)
    assert tridiagonal_eigenvalues(d, e, "min")[0] == pytest.approx(ref[0], rel=1e-10)
    assert tridiagonal_eigenvalues(d, e, "max")[0] == pytest.approx(ref[-1], rel=1e-10)
    lam = tridiagonal_eigenvalues(d, e)
    assert lam.sum() == pytest.approx(np.trace(dense), rel=1e-10)
    assert np.sum(lam**2) == pytest.approx(np.sum(dense**2), rel=1e-10)
    np.testing.assert_allclose(tridiagonal_eigenvalues([2.0], []), [2.0])


def test_m_r_single_level_is_quarter():
    assert compute_m_r(TimeMesh([0.0, 0.5])) == pytest.approx(0.25)


def test_m_r_uniform_below_four():
    for N in (2, 10, 50, 200):
        assert compute_m_r(uniform_mesh(1.0, N)) <= 4.0


def test_m_r_matches_dense_computation():
    mesh = random_s1_mesh(1.0, 25, 4)
    levels = m_r_levels(mesh)
    for n in (1, 7, 25):
        mats = kernel_matrices(mesh, n)
        lam_max = np.linalg.eigvalsh(mats.Btilde2.T @ mats.Btilde2).max()
        lam_min = np.linalg.eigvalsh(mats.Btilde).min()
        assert levels[n - 1] == pytest.approx(lam_max / lam_min**2, rel=1e-10)


def test_m_r_fails_beyond_ratio_limit():
    tau = [1.0] + [10.0**k for k in range(1, 12)]
    mesh = TimeMesh(np.concatenate(([0.0], np.cumsum(tau))))
    with pytest.raises(StabilityError):
        compute_m_r(mesh)
    with pytest.raises(ValueError):
        compute_m_r(TimeMesh([0.0]))


def test_audit_doc_kernels():
    audit = audit_doc_kernels(random_s1_mesh(1.0, 80, 2))
    assert audit.s1_satisfied
    assert audit.orthogonality_deviation < 1e-12
    assert audit.row_sum_deviation < 1e-12
    assert audit.recursion_vs_closed_form < 1e-12
    assert audit.min_theta > 0
