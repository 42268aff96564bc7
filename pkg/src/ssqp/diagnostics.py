"""Numerical verification of the solver's structural hypotheses.

Given a reference solution, the multiplier set is the affine set
{mu : J*^T mu = -g*} intersected with the polar-cone inequalities; the
routines here project multipliers onto it, measure how coercive the
stabilized Hessian pencil is, quantify constraint degeneracy through
metric-weighted singular values, and certify the computable error
estimate empirically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .model import ConeSpec, ProblemDef
from .spaces import Functional, InnerProductSpace, PrimalVec

logger = logging.getLogger(__name__)


class InvalidReference(ValueError):
    """The stored multiplier set is empty or inconsistent."""


@dataclass
class ReferenceSolution:
    """Known solution z* plus the data describing its multiplier set.

    The multiplier set is {mu : j_star^T mu = -g_star, <mu, y_i> <= 0}.
    `lambda_star` stores one feasible member (used as a reporting anchor,
    not needed for projections).  Nonemptiness is certified at
    construction by solving the stationarity system and checking the
    residual.
    """

    z_star: PrimalVec
    j_star: np.ndarray
    g_star: np.ndarray
    cone: ConeSpec
    lambda_star: Functional

    def __post_init__(self) -> None:
        self.j_star = np.asarray(self.j_star, dtype=float)
        self.g_star = np.asarray(self.g_star, dtype=float)
        dist, _ = multiplier_distance(self, self.lambda_star)
        scale = 1.0 + self.space_y.dual_norm(self.lambda_star)
        if not np.isfinite(dist) or dist > 1e-8 * scale:
            raise InvalidReference(
                f"stored multiplier is {dist:.3e} away from the multiplier set"
            )

    @property
    def space_y(self) -> InnerProductSpace:
        return self.lambda_star.space


def multiplier_distance(
    ref: ReferenceSolution, lam: Functional
) -> tuple[float, Functional]:
    """Dual-norm projection of lam onto the multiplier set at z*.

    Minimizes |lam - mu|_{Y*} subject to j_star^T mu = -g_star, and for a
    nontrivial cone additionally <mu, y_i> <= 0 via enumeration of active
    inequality subsets.  Returns (distance, projection).
    """
    Y = ref.space_y
    m = ref.cone.m
    best: tuple[float, Functional] | None = None
    res_scale = 1.0 + float(np.abs(ref.g_star).max())
    for size in range(m + 1):
        for subset in combinations(range(m), size):
            C = ref.j_star.T
            b = -ref.g_star
            if subset:
                C = np.vstack([C, ref.cone.generator_matrix[:, list(subset)].T])
                b = np.concatenate([b, np.zeros(len(subset))])
            # mu = lam - M C^T nu with (C M C^T) nu = C lam - b.
            CM = C @ Y.mass
            nu, *_ = np.linalg.lstsq(CM @ C.T, C @ lam.coeffs - b, rcond=None)
            mu = lam.coeffs - Y.mass @ (C.T @ nu)
            if np.abs(C @ mu - b).max() > 1e-9 * res_scale:
                continue
            if m and (ref.cone.generator_matrix.T @ mu > 1e-9).any():
                continue
            dist = Y.dual_norm_arr(lam.coeffs - mu)
            if best is None or dist < best[0]:
                best = (dist, Functional(Y, mu))
    if best is None:
        raise InvalidReference("multiplier set is empty (inconsistent system)")
    return best


def coercivity_margin(H, J, massZ, massY, rho: float) -> float:
    """Smallest eigenvalue of H + (1/rho) J^T massY J in the massZ metric.

    The second term is the squared Y-norm of the linearized constraint,
    so the margin measures how much the stabilization term restores
    coercivity of an indefinite Hessian.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    H = np.asarray(H, dtype=float)
    J = np.asarray(J, dtype=float)
    massZ = np.asarray(massZ, dtype=float)
    massY = np.asarray(massY, dtype=float)
    A = H + (J.T @ massY @ J) / rho
    A = 0.5 * (A + A.T)
    try:
        eigs = scipy.linalg.eigh(
            A, 0.5 * (massZ + massZ.T), eigvals_only=True,
            subset_by_index=[0, 0],
        )
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ValueError("massZ must be symmetric positive definite") from exc
    return float(eigs[0])


@dataclass
class DegeneracyReport:
    singular_values: np.ndarray
    rank_tol: float
    rcq_satisfied: bool


def degeneracy_report(
    p: ProblemDef, z: PrimalVec, rank_tol_factor: float = 1e-8
) -> DegeneracyReport:
    """Metric-weighted singular values of the constraint Jacobian at z.

    The Jacobian is whitened by the Cholesky factors of both mass
    matrices, so the singular values measure the map Z -> Y in the
    correct norms.  Surjectivity (the equality-constrained constraint
    qualification) holds when the smallest of the Y.dim values exceeds
    rank_tol = rank_tol_factor * largest.
    """
    J = np.asarray(p.jac_G(z), dtype=float)
    Lz = scipy.linalg.cholesky(p.Z.mass, lower=True)
    Ly = scipy.linalg.cholesky(p.Y.mass, lower=True)
    B = Ly.T @ J
    # whiten the domain: Jt = B Lz^{-T}
    Jt = scipy.linalg.solve_triangular(Lz, B.T, lower=True).T
    svals = np.linalg.svd(Jt, compute_uv=False)
    rank_tol = rank_tol_factor * (svals[0] if svals.size else 0.0)
    surjective = svals.size >= p.Y.dim and bool(svals[p.Y.dim - 1] > rank_tol)
    return DegeneracyReport(svals, float(rank_tol), surjective)


def error_estimate_ratio(
    ref: ReferenceSolution, p: ProblemDef, samples
) -> float:
    """Largest ratio (true error) / (computable residual) over samples.

    Each sample is a (z, lam) pair; the computable residual is
    |L'_z(z, lam)|_{Z*} + |G(z)|_Y.  Samples at the reference itself
    (0/0) are skipped; a vanishing residual with nonzero error yields
    infinity.
    """
    worst = 0.0
    for i, (z, lam) in enumerate(samples):
        num = p.Z.norm_arr(z.coords - ref.z_star.coords)
        num += multiplier_distance(ref, lam)[0]
        den = p.Z.dual_norm(p.lagrangian_grad(z, lam)) + p.Y.norm(p.G(z))
        if den <= 1e-15:
            if num <= 1e-13:
                continue
            logger.warning(
                "sample %d has zero residual but error %.3e; ratio is infinite",
                i, num,
            )
            return float(np.inf)
        worst = max(worst, num / den)
    return worst
