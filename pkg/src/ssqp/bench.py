"""Shipped benchmark problems with certified reference solutions.

Three families:

* ``degenerate-line``: two variables, two redundant scalar constraints
  pinning the first coordinate, so the constraint Jacobian has rank one
  everywhere and the multiplier set at the solution is a whole line.
* ``cone-active``: the smallest nontrivial cone instance; the solution
  sits on the cone boundary with a boundary multiplier.
* ``eigencontrol-n49``: a 1-D finite-difference bilinear control problem
  (state u, scalar coefficient q, constraint -u'' + q u = 0) tuned so
  that q sits at a discrete eigenvalue of the Laplacian.  There the
  linearized constraint loses surjectivity and the multipliers form a
  line spanned by the eigenfunction.

Reference multipliers come from independent reduced-space or enumeration
oracles, never from the solver itself, and every reference is certified
by the KKT residual when the benchmark is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.optimize

from .diagnostics import ReferenceSolution, degeneracy_report
from .model import ConeSpec, ProblemDef, empty_cone
from .spaces import Functional, InnerProductSpace, PrimalVec, product_space

#: Dense factorizations cap the discretization size.
MAX_GRID_POINTS = 2000


@dataclass
class BenchmarkProblem:
    name: str
    problem: ProblemDef
    reference: ReferenceSolution | None
    certified_radius: float
    notes: str
    default_start_offset: np.ndarray = field(default=None)  # type: ignore[assignment]
    default_lambda0: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.default_start_offset is None:
            self.default_start_offset = np.zeros(self.problem.Z.dim)
        if self.default_lambda0 is None:
            self.default_lambda0 = np.zeros(self.problem.Y.dim)
        if self.reference is not None:
            kkt = self.problem.kkt_residual(
                self.reference.z_star, self.reference.lambda_star
            )
            if kkt.total > 1e-9:
                raise ValueError(
                    f"{self.name}: reference fails the KKT test ({kkt.total:.3e})"
                )

    def default_start(self) -> tuple[PrimalVec, Functional]:
        base = (
            self.reference.z_star.coords
            if self.reference is not None
            else np.zeros(self.problem.Z.dim)
        )
        z0 = self.problem.Z.vector(base + self.default_start_offset)
        lam0 = self.problem.Y.functional(self.default_lambda0)
        return z0, lam0


def _degeneracy_note(p: ProblemDef, z: PrimalVec) -> str:
    rep = degeneracy_report(p, z)
    svals = ", ".join(f"{s:.3e}" for s in rep.singular_values[:6])
    suffix = ", ..." if rep.singular_values.size > 6 else ""
    return (
        f"singular values at reference: [{svals}{suffix}]; "
        f"constraint qualification satisfied: {rep.rcq_satisfied}"
    )


def make_degenerate_line(mass_z=None, mass_y=None) -> BenchmarkProblem:
    """Rank-deficient two-variable instance with a line of multipliers.

    f(x) = x1 + |x|^2 / 2 and G(x) = (x1, x1 + x1^2): both constraints
    pin x1 = 0 near the origin, so G'(0) has rank one and every lambda
    with lambda1 + lambda2 = -1 is a multiplier.  Optional mass matrices
    change only the metric (and hence the projected multiplier), not the
    solution set.
    """
    Z = InnerProductSpace(mass_z) if mass_z is not None else InnerProductSpace.identity(2)
    Y = InnerProductSpace(mass_y) if mass_y is not None else InnerProductSpace.identity(2)
    if Z.dim != 2 or Y.dim != 2:
        raise ValueError("degenerate-line uses two-dimensional Z and Y")

    def f(z: PrimalVec) -> float:
        x = z.coords
        return float(x[0] + 0.5 * (x @ x))

    def grad_f(z: PrimalVec) -> Functional:
        x = z.coords
        return Functional(Z, np.array([1.0 + x[0], x[1]]))

    def G(z: PrimalVec) -> PrimalVec:
        x1 = z.coords[0]
        return PrimalVec(Y, np.array([x1, x1 + x1 * x1]))

    def jac_G(z: PrimalVec) -> np.ndarray:
        x1 = z.coords[0]
        return np.array([[1.0, 0.0], [1.0 + 2.0 * x1, 0.0]])

    def hess_L(z: PrimalVec, lam: Functional) -> np.ndarray:
        # second constraint contributes lam2 * d^2(x1^2)
        return np.array([[1.0 + 2.0 * lam.coeffs[1], 0.0], [0.0, 1.0]])

    problem = ProblemDef(Z, Y, empty_cone(Y), f, grad_f, G, jac_G, hess_L)
    z_star = Z.vector([0.0, 0.0])
    lam_hat = Y.functional([-0.5, -0.5])
    if mass_y is not None:
        # keep the stored anchor the metric projection of zero onto the line
        dist_dir = Y.mass @ np.ones(2)
        lam_hat = Y.functional(-dist_dir / dist_dir.sum())
    reference = ReferenceSolution(
        z_star=z_star,
        j_star=jac_G(z_star),
        g_star=grad_f(z_star).coeffs,
        cone=problem.cone,
        lambda_star=lam_hat,
    )
    return BenchmarkProblem(
        name="degenerate-line",
        problem=problem,
        reference=reference,
        certified_radius=0.1,
        notes=_degeneracy_note(problem, z_star),
        default_start_offset=np.array([0.1, 0.1]),
        default_lambda0=np.array([-0.6, -0.45]),
    )


def _cone_kkt_enumeration(H, center, cone: ConeSpec):
    """Reference oracle for quadratic f, identity G: enumerate activity
    patterns of the exact KKT system and return the feasible minimizer."""
    n = H.shape[0]
    YG = cone.generator_matrix
    m = cone.m
    best = None
    for size in range(m + 1):
        for active in combinations(range(m), size):
            # unknowns: x, lam, c_active; c_i = 0 off the pattern
            na = len(active)
            idx = list(active)
            A = np.zeros((2 * n + na, 2 * n + na))
            rhs = np.zeros(2 * n + na)
            A[:n, :n] = H
            A[:n, n : 2 * n] = np.eye(n)
            rhs[:n] = H @ center
            A[n : 2 * n, :n] = np.eye(n)
            if na:
                A[n : 2 * n, 2 * n :] = -YG[:, idx]
                A[2 * n :, n : 2 * n] = YG[:, idx].T
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam, c = sol[:n], sol[n : 2 * n], sol[2 * n :]
            if (c < -1e-12).any():
                continue
            if (YG.T @ lam > 1e-12).any():
                continue
            inactive = [i for i in range(m) if i not in active]
            full_c = np.zeros(m)
            full_c[idx] = c
            # feasibility of x itself: G(x) = x must equal YG @ full_c
            if np.abs(x - YG @ full_c).max() > 1e-10:
                continue
            val = 0.5 * (x - center) @ H @ (x - center)
            if best is None or val < best[0]:
                best = (val, x, lam)
    if best is None:
        raise RuntimeError("cone enumeration oracle found no KKT point")
    return best[1], best[2]


def make_cone_instance() -> BenchmarkProblem:
    """Distance-to-point objective constrained to the half-line cone.

    f(x) = |x - (0, -1)|^2 / 2 with G(x) = x required to lie in the cone
    spanned by y1 = (1, 0).  The solution is the cone vertex with the
    boundary multiplier (0, -1), pairing to zero against y1.
    """
    Z = InnerProductSpace.identity(2)
    Y = InnerProductSpace.identity(2)
    cone = ConeSpec(Y, (Y.vector([1.0, 0.0]),))
    center = np.array([0.0, -1.0])

    def f(z: PrimalVec) -> float:
        d = z.coords - center
        return float(0.5 * (d @ d))

    def grad_f(z: PrimalVec) -> Functional:
        return Functional(Z, z.coords - center)

    def G(z: PrimalVec) -> PrimalVec:
        return PrimalVec(Y, z.coords.copy())

    def jac_G(z: PrimalVec) -> np.ndarray:
        return np.eye(2)

    def hess_L(z: PrimalVec, lam: Functional) -> np.ndarray:
        return np.eye(2)

    problem = ProblemDef(Z, Y, cone, f, grad_f, G, jac_G, hess_L)
    x_star, lam_star = _cone_kkt_enumeration(np.eye(2), center, cone)
    z_star = Z.vector(x_star)
    reference = ReferenceSolution(
        z_star=z_star,
        j_star=jac_G(z_star),
        g_star=grad_f(z_star).coeffs,
        cone=cone,
        lambda_star=Y.functional(lam_star),
    )
    return BenchmarkProblem(
        name="cone-active",
        problem=problem,
        reference=reference,
        certified_radius=1.0,
        notes=_degeneracy_note(problem, z_star),
        default_start_offset=np.array([0.05, -0.85]),
        default_lambda0=np.array([0.0, 0.0]),
    )


def fd_laplacian(n: int) -> np.ndarray:
    """Central-difference Laplacian on n interior points of (0, 1)."""
    h = 1.0 / (n + 1)
    A = (np.diag(2.0 * np.ones(n)) - np.diag(np.ones(n - 1), 1)
         - np.diag(np.ones(n - 1), -1)) / h**2
    return A


def fd_eigenvalue(n: int, mode: int) -> float:
    """Discrete eigenvalue of the n-point difference Laplacian."""
    h = 1.0 / (n + 1)
    return (2.0 / h**2) * (1.0 - np.cos(mode * np.pi * h))


def make_eigencontrol(
    n: int = 49,
    alpha: float = 1.0,
    q_d: float | None = None,
    u_d_mode: int = 1,
    u_d_amp: float = 0.0,
) -> BenchmarkProblem:
    """Discretized bilinear optimal control with an eigenvalue coefficient.

    State u on n interior grid points, scalar control q, constraint
    A u + q u = 0 with the difference Laplacian A.  The state lives in a
    discrete H^2 metric h (I + A^T A), the constraint space carries the
    lumped L^2 metric h I, and the objective is
    |u - u_d|_{L2}^2 / 2 + alpha (q - q_d)^2 / 2.

    With q_d at the discrete eigenvalue (the default) and u_d orthogonal
    to the eigenfunction, the branch of eigenfunction states and the
    trivial branch u = 0 meet at (0, q_d): the Jacobian there is rank
    deficient and the multipliers form a line along the eigenfunction.
    The eigen-branch reference is located by a reduced 1-D minimization
    over eigenfunction amplitudes, independent of the solver.
    """
    if n < 3:
        raise ValueError("need at least 3 interior grid points")
    if n > MAX_GRID_POINTS:
        raise ValueError(f"dense solves support at most {MAX_GRID_POINTS} points")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 1 <= u_d_mode <= n:
        raise ValueError(f"u_d_mode must lie in 1..{n}")
    h = 1.0 / (n + 1)
    x_grid = h * np.arange(1, n + 1)
    A = fd_laplacian(n)
    lam_h = fd_eigenvalue(n, u_d_mode)
    q_h = -lam_h
    if q_d is None:
        q_d = q_h
    phi = np.sin(u_d_mode * np.pi * x_grid)
    u_d = u_d_amp * phi

    state_space = InnerProductSpace(h * (np.eye(n) + A.T @ A))
    control_space = InnerProductSpace.identity(1)
    Z = product_space([state_space, control_space])
    Y = InnerProductSpace(h * np.eye(n))

    def split(z: PrimalVec) -> tuple[np.ndarray, float]:
        u = z.coords[:n]
        return u, float(z.coords[n])

    def f(z: PrimalVec) -> float:
        u, q = split(z)
        du = u - u_d
        return float(0.5 * h * (du @ du) + 0.5 * alpha * (q - q_d) ** 2)

    def grad_f(z: PrimalVec) -> Functional:
        u, q = split(z)
        return Functional(Z, np.concatenate([h * (u - u_d), [alpha * (q - q_d)]]))

    def G(z: PrimalVec) -> PrimalVec:
        u, q = split(z)
        return PrimalVec(Y, A @ u + q * u)

    def jac_G(z: PrimalVec) -> np.ndarray:
        u, q = split(z)
        return np.hstack([A + q * np.eye(n), u[:, None]])

    def hess_L(z: PrimalVec, lam: Functional) -> np.ndarray:
        H = np.zeros((n + 1, n + 1))
        H[:n, :n] = h * np.eye(n)
        H[:n, n] = lam.coeffs
        H[n, :n] = lam.coeffs
        H[n, n] = alpha
        return H

    problem = ProblemDef(Z, Y, empty_cone(Y), f, grad_f, G, jac_G, hess_L)

    # Reduced oracle: minimize over the eigen-branch family (c phi, q_h).
    def reduced(c: float) -> float:
        return f(Z.vector(np.concatenate([c * phi, [q_h]])))

    bracket = max(1.0, 2.0 * abs(u_d_amp))
    res = scipy.optimize.minimize_scalar(
        reduced, bounds=(-bracket, bracket), method="bounded",
        options={"xatol": 1e-12},
    )
    c_star = float(res.x)
    if abs(c_star) < 1e-9:
        c_star = 0.0
    z_star = Z.vector(np.concatenate([c_star * phi, [q_h]]))

    def certify(z: PrimalVec) -> ReferenceSolution | None:
        # minimal-norm multiplier for the stationarity system at z
        Jst = jac_G(z)
        gst = grad_f(z).coeffs
        lam_coeffs, *_ = np.linalg.lstsq(Jst.T, -gst, rcond=None)
        if problem.kkt_residual(z, Y.functional(lam_coeffs)).total > 1e-9:
            return None
        return ReferenceSolution(
            z_star=z,
            j_star=Jst,
            g_star=gst,
            cone=problem.cone,
            lambda_star=Y.functional(lam_coeffs),
        )

    z_trivial = Z.vector(np.concatenate([np.zeros(n), [q_d]]))
    eigen_ref = certify(z_star)
    trivial_ref = certify(z_trivial)
    reference = eigen_ref if eigen_ref is not None else trivial_ref
    if reference is not None and reference is trivial_ref:
        z_star = z_trivial

    # Default start: eigenfunction + low-mode wiggle in u, small q shift,
    # normalized to a fraction of the certified radius in the Z metric.
    certified_radius = 2e-2
    phi2 = np.sin(2 * np.pi * x_grid)
    direction = np.concatenate([phi + 0.3 * phi2, [0.5]])
    direction /= Z.norm_arr(direction)
    offset = 0.5 * certified_radius * direction
    notes = _degeneracy_note(problem, z_star)
    branches = []
    if eigen_ref is not None:
        branches.append("eigen")
    if trivial_ref is not None:
        branches.append("trivial")
    if branches:
        notes += f"; certified branches: {', '.join(branches)}"
    else:
        notes += "; no reference certified for these parameters"
    return BenchmarkProblem(
        name=f"eigencontrol-n{n}",
        problem=problem,
        reference=reference,
        certified_radius=certified_radius,
        notes=notes,
        default_start_offset=offset,
        default_lambda0=np.zeros(n),
    )


_REGISTRY = {
    "degenerate-line": make_degenerate_line,
    "cone-active": make_cone_instance,
    "eigencontrol-n49": lambda: make_eigencontrol(n=49),
}


def list_benchmarks() -> list[str]:
    """Registered benchmark names, in registration order."""
    return list(_REGISTRY)


def get_benchmark(name: str, **overrides) -> BenchmarkProblem:
    """Build a registered benchmark; overrides reach the factory."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown benchmark {name!r}; available: {', '.join(_REGISTRY)}"
        ) from None
    if overrides and name.startswith("eigencontrol"):
        params = {"n": 49, "alpha": 1.0, "q_d": None, "u_d_mode": 1, "u_d_amp": 0.0}
        params.update(overrides)
        return make_eigencontrol(**params)
    if overrides:
        return _REGISTRY[name](**overrides)  # type: ignore[call-arg]
    return factory()
