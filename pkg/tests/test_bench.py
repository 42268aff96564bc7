import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from ssqp.bench import (
    fd_eigenvalue,
    fd_laplacian,
    get_benchmark,
    list_benchmarks,
    make_degenerate_line,
    make_eigencontrol,
)
from ssqp.diagnostics import degeneracy_report, multiplier_distance
from ssqp.solver import SolverOptions, SolveStatus, run


class TestRegistry:
    def test_known_names_present(self):
        names = list_benchmarks()
        assert "degenerate-line" in names
        assert "eigencontrol-n49" in names

    def test_ordering_is_stable(self):
        assert list_benchmarks() == list_benchmarks()

    def test_unknown_name_rejected(self):
        with pytest.raises(KeyError):
            get_benchmark("no-such-benchmark")

    @pytest.mark.parametrize("name", list_benchmarks())
    def test_references_certified(self, name):
        bm = get_benchmark(name)
        assert bm.reference is not None
        kkt = bm.problem.kkt_residual(bm.reference.z_star,
                                      bm.reference.lambda_star)
        assert kkt.total <= 1e-9


class TestDegenerateLine:
    def test_hand_verified_kkt_point(self):
        bm = make_degenerate_line()
        kkt = bm.problem.kkt_residual(bm.problem.Z.vector([0, 0]),
                                      bm.problem.Y.functional([-0.5, -0.5]))
        assert kkt.total <= 1e-14

    def test_singular_values_at_solution(self):
        bm = make_degenerate_line()
        rep = degeneracy_report(bm.problem, bm.reference.z_star)
        assert_allclose(sorted(rep.singular_values), [0.0, np.sqrt(2.0)],
                        atol=1e-12)

    def test_hessian_positive_only_on_null_space(self):
        # the full Hessian at the projected multiplier is diag(0, 1):
        # singular overall, positive definite along the constraint null
        # space span{e2}
        bm = make_degenerate_line()
        p = bm.problem
        H = p.hess_L(p.Z.vector([0, 0]), p.Y.functional([-0.5, -0.5]))
        assert_allclose(H, np.diag([0.0, 1.0]), atol=1e-14)
        e2 = np.array([0.0, 1.0])
        assert e2 @ H @ e2 == pytest.approx(1.0)

    def test_metric_override_moves_projected_multiplier(self):
        bm = make_degenerate_line(mass_y=np.diag([4.0, 1.0]))
        assert_allclose(bm.reference.lambda_star.coeffs, [-0.8, -0.2],
                        atol=1e-12)

    def test_dimension_of_override_checked(self):
        with pytest.raises(ValueError):
            make_degenerate_line(mass_y=np.eye(3))


class TestConeInstance:
    def test_reference_geometry(self):
        bm = get_benchmark("cone-active")
        assert_allclose(bm.reference.z_star.coords, [0.0, 0.0], atol=1e-12)
        pairings = bm.problem.cone.pairings(bm.reference.lambda_star)
        assert pairings[0] == pytest.approx(0.0, abs=1e-12)

    def test_solver_converges_from_interior_start(self):
        bm = get_benchmark("cone-active")
        z0 = bm.problem.Z.vector([0.05, -0.9 + 0.05])
        lam0 = bm.problem.Y.zero_functional()
        report = run(bm.problem, z0, lam0, SolverOptions(tol=1e-12),
                     reference=bm.reference)
        assert report.status is SolveStatus.CONVERGED
        assert report.history[-1].kkt.total <= 1e-10
        assert_allclose(report.history[-1].z.coords, [0.0, 0.0], atol=1e-9)


class TestEigencontrol:
    def test_fd_eigenvalue_matches_eigensolve(self):
        n = 23
        A = fd_laplacian(n)
        eigs = np.sort(np.linalg.eigvalsh(A))
        for mode in (1, 2, 3):
            assert fd_eigenvalue(n, mode) == pytest.approx(eigs[mode - 1],
                                                           rel=1e-12)

    def test_zero_target_trivial_global_solution(self):
        bm = make_eigencontrol(n=15, q_d=-2.0, u_d_amp=0.0)
        p = bm.problem
        z = p.Z.vector(np.concatenate([np.zeros(15), [-2.0]]))
        assert p.f(z) == 0.0
        kkt = p.kkt_residual(z, p.Y.zero_functional())
        assert kkt.total <= 1e-12

    def test_state_metric_is_discrete_h2(self):
        n = 9
        bm = make_eigencontrol(n=n)
        h = 1.0 / (n + 1)
        A = fd_laplacian(n)
        expect = scipy.linalg.block_diag(h * (np.eye(n) + A.T @ A), [[1.0]])
        assert_allclose(bm.problem.Z.mass, expect, rtol=1e-12)

    def test_jacobian_singular_at_discrete_eigenvalue(self):
        bm = get_benchmark("eigencontrol-n49")
        rep = degeneracy_report(bm.problem, bm.reference.z_star)
        assert rep.singular_values.min() <= 1e-8
        assert not rep.rcq_satisfied

    def test_null_space_structure(self):
        # eigenfunction direction plus the control direction, nothing else
        bm = get_benchmark("eigencontrol-n49")
        p = bm.problem
        J = p.jac_G(bm.reference.z_star)
        Lz = scipy.linalg.cholesky(p.Z.mass, lower=True)
        Ly = scipy.linalg.cholesky(p.Y.mass, lower=True)
        Jt = scipy.linalg.solve_triangular(Lz, (Ly.T @ J).T, lower=True).T
        basis = scipy.linalg.null_space(Jt, rcond=1e-8)
        assert 1 <= basis.shape[1] <= 2

    def test_hessian_positive_on_numerical_null_space(self):
        # alpha exceeds the threshold proxy 2 |lam*|^2 + |u*|^2, so the
        # Hessian form is positive definite on the null-space directions
        bm = get_benchmark("eigencontrol-n49")
        p = bm.problem
        ref = bm.reference
        u_norm = p.Y.norm_arr(ref.z_star.coords[:-1])
        lam_norm = p.Y.dual_norm(ref.lambda_star)
        alpha = 1.0
        assert alpha > 2.0 * lam_norm**2 + u_norm**2
        J = p.jac_G(ref.z_star)
        Lz = scipy.linalg.cholesky(p.Z.mass, lower=True)
        Ly = scipy.linalg.cholesky(p.Y.mass, lower=True)
        Jt = scipy.linalg.solve_triangular(Lz, (Ly.T @ J).T, lower=True).T
        white_basis = scipy.linalg.null_space(Jt, rcond=1e-8)
        basis = scipy.linalg.solve_triangular(Lz.T, white_basis, lower=False)
        H = p.hess_L(ref.z_star, ref.lambda_star)
        projected = basis.T @ H @ basis
        metric = basis.T @ p.Z.mass @ basis
        assert scipy.linalg.eigh(projected, metric, eigvals_only=True)[0] > 0

    def test_trivial_branch_reference_when_eigen_branch_fails(self):
        # off-eigenvalue q_d with zero target: the eigen family point is
        # not stationary but the trivial branch still certifies
        bm = make_eigencontrol(n=15, q_d=-2.0, u_d_amp=0.0)
        assert bm.reference is not None
        assert bm.reference.z_star.coords[-1] == pytest.approx(-2.0)
        assert "trivial" in bm.notes

    def test_nonzero_amplitude_restores_regularity(self):
        # a nonzero eigenfunction component in the target moves the
        # optimum to (amp phi, q_h), where the control column of the
        # Jacobian spans the missing direction
        bm = make_eigencontrol(n=15, u_d_amp=0.1)
        assert bm.reference is not None
        c = bm.reference.z_star.coords[:-1] @ np.sin(
            np.pi / 16 * np.arange(1, 16)
        )
        assert c != pytest.approx(0.0, abs=1e-6)
        rep = degeneracy_report(bm.problem, bm.reference.z_star)
        assert rep.rcq_satisfied

    def test_grid_limits(self):
        with pytest.raises(ValueError):
            make_eigencontrol(n=2)
        with pytest.raises(ValueError):
            make_eigencontrol(n=4000)
        with pytest.raises(ValueError):
            make_eigencontrol(n=15, alpha=-1.0)
        with pytest.raises(ValueError):
            make_eigencontrol(n=15, u_d_mode=0)
        with pytest.raises(ValueError):
            make_eigencontrol(n=15, u_d_mode=16)

    def test_quadratic_convergence_from_certified_start(self):
        bm = get_benchmark("eigencontrol-n49")
        p = bm.problem
        z0, lam0 = bm.default_start()
        report = run(p, z0, lam0, SolverOptions(tol=1e-10, max_iter=30),
                     reference=bm.reference)
        assert report.status is SolveStatus.CONVERGED
        assert report.history[-1].kkt.total <= 1e-10

    def test_multiplier_set_is_eigenfunction_line(self):
        bm = get_benchmark("eigencontrol-n49")
        p = bm.problem
        ref = bm.reference
        n = p.Y.dim
        h = 1.0 / (n + 1)
        phi = np.sin(np.pi * h * np.arange(1, n + 1))
        for s in (-0.4, 0.0, 0.9):
            lam = p.Y.functional(s * phi)
            dist, _ = multiplier_distance(ref, lam)
            assert dist <= 1e-8 * (1.0 + abs(s))
