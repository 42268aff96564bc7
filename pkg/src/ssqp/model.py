"""Problem definitions: objective, constraint map, cone, Lagrangian, KKT test.

A problem is

    min f(z)   subject to   G(z) in K,

where K is either {0} or the cone spanned with nonnegative weights by a
fixed list of linearly independent generators in the constraint space Y.
Derivatives are user-supplied callbacks; `validate_problem` cross-checks
them against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .spaces import DimensionMismatch, Functional, InnerProductSpace, PrimalVec

#: Exact cone projections enumerate active subsets; 2^m stays desk-scale.
MAX_CONE_GENERATORS = 12


class UnsupportedConeSize(ValueError):
    """Cone projection by subset enumeration is capped at 12 generators."""


@dataclass
class ConeSpec:
    """Finitely generated cone K = {sum_i c_i y_i : c_i >= 0} in Y.

    An empty generator list encodes K = {0}.  Generators must be linearly
    independent in the Y metric: the Gram matrix of pairwise inner products
    is formed at construction and its smallest eigenvalue must exceed
    1e-10 times the largest.
    """

    space: InnerProductSpace
    generators: tuple[PrimalVec, ...]
    gram: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.generators = tuple(self.generators)
        m = len(self.generators)
        cols = [g.coords for g in self.generators]
        self.generator_matrix = (
            np.column_stack(cols) if m else np.zeros((self.space.dim, 0))
        )
        massed = self.space.mass @ self.generator_matrix
        self.gram = self.generator_matrix.T @ massed
        self._massed_generators = massed
        if m:
            eigs = np.linalg.eigvalsh(self.gram)
            if eigs[0] <= 1e-10 * eigs[-1]:
                raise ValueError("cone generators are not linearly independent in Y")

    @property
    def m(self) -> int:
        return len(self.generators)

    def pairings(self, l: Functional) -> np.ndarray:
        """<l, y_i> for every generator."""
        return self.generator_matrix.T @ l.coeffs

    def coords(self, r: PrimalVec) -> tuple[np.ndarray, float]:
        """Split r into span{y_i} coordinates and the orthogonal remainder.

        Returns (c, residual) where gram c = [(r, y_i)_Y] and residual is
        the Y-norm of r - sum_i c_i y_i.
        """
        if self.m == 0:
            raise ValueError("cone coordinates need at least one generator")
        b = self._massed_generators.T @ r.coords
        c = np.linalg.solve(self.gram, b)
        rem = r.coords - self.generator_matrix @ c
        return c, self.space.norm_arr(rem)


def empty_cone(space: InnerProductSpace) -> ConeSpec:
    return ConeSpec(space, ())


@dataclass
class ProblemDef:
    """Callbacks defining the optimization problem over spaces Z and Y.

    jac_G(z) maps Z coordinates to Y coordinates (Y.dim x Z.dim matrix);
    hess_L(z, lam) is the full Lagrangian Hessian, symmetric and affine in
    the multiplier.  Callbacks must be pure so that distinct solves can
    share a ProblemDef.
    """

    Z: InnerProductSpace
    Y: InnerProductSpace
    cone: ConeSpec
    f: Callable[[PrimalVec], float]
    grad_f: Callable[[PrimalVec], Functional]
    G: Callable[[PrimalVec], PrimalVec]
    jac_G: Callable[[PrimalVec], np.ndarray]
    hess_L: Callable[[PrimalVec, Functional], np.ndarray]

    def lagrangian_grad(self, z: PrimalVec, lam: Functional) -> Functional:
        """Coefficients of f'(z) + G'(z)* lam as a Z functional."""
        g = self.grad_f(z).coeffs
        J = np.asarray(self.jac_G(z), dtype=float)
        if J.shape != (self.Y.dim, self.Z.dim):
            raise DimensionMismatch(
                f"jac_G returned shape {J.shape}, expected {(self.Y.dim, self.Z.dim)}"
            )
        return Functional(self.Z, g + J.T @ lam.coeffs)

    def kkt_residual(self, z: PrimalVec, lam: Functional) -> "KKTResidual":
        """Residual of the first-order conditions at (z, lam).

        Stationarity is the Z* dual norm of the Lagrangian gradient.  For
        K = {0}, feasibility is |G(z)|_Y.  Otherwise it is the Y-distance
        of G(z) to the complementarity face {sum c_i y_i : c_i >= 0,
        c_i <l, y_i> = 0}, computed by enumerating active subsets, and the
        polar violation records any positive generator pairing.
        """
        stationarity = self.Z.dual_norm(self.lagrangian_grad(z, lam))
        gval = self.G(z)
        m = self.cone.m
        if m == 0:
            return KKTResidual(stationarity, self.Y.norm(gval), 0.0)
        if m > MAX_CONE_GENERATORS:
            raise UnsupportedConeSize(
                f"cone projection supports at most {MAX_CONE_GENERATORS} "
                f"generators, got {m}"
            )
        pairings = self.cone.pairings(lam)
        polar = float(max(0.0, pairings.max()))
        # Complementarity allows c_i > 0 only where <lam, y_i> vanishes.
        active_tol = 1e-9 * (1.0 + self.Y.dual_norm(lam))
        allowed = [i for i in range(m) if abs(pairings[i]) <= active_tol]
        feasibility = _cone_face_distance(self.cone, gval, allowed)
        return KKTResidual(stationarity, feasibility, polar)


def _cone_face_distance(cone: ConeSpec, r: PrimalVec, allowed: list[int]) -> float:
    """Y-distance of r to {sum_{i in allowed} c_i y_i : c_i >= 0}.

    Exact projection by enumerating support subsets of the allowed
    generators (they are linearly independent, so each subset gives one
    candidate via a Gram solve).
    """
    rnorm2 = cone.space.norm_arr(r.coords) ** 2
    b = cone._massed_generators.T @ r.coords
    best = rnorm2
    for size in range(1, len(allowed) + 1):
        for subset in combinations(allowed, size):
            idx = list(subset)
            c = np.linalg.solve(cone.gram[np.ix_(idx, idx)], b[idx])
            if (c < -1e-12).any():
                continue
            dist2 = rnorm2 - c @ b[idx]
            best = min(best, dist2)
    return float(np.sqrt(max(best, 0.0)))


@dataclass
class KKTResidual:
    """Componentwise KKT residual; zero total means a KKT point."""

    stationarity: float
    feasibility: float
    polar_violation: float

    @property
    def total(self) -> float:
        return self.stationarity + self.feasibility + self.polar_violation


def lagrangian_grad(p: ProblemDef, z: PrimalVec, lam: Functional) -> Functional:
    return p.lagrangian_grad(z, lam)


def cone_coords(cone: ConeSpec, r: PrimalVec) -> tuple[np.ndarray, float]:
    return cone.coords(r)


def kkt_residual(p: ProblemDef, z: PrimalVec, lam: Functional) -> KKTResidual:
    return p.kkt_residual(z, lam)


def validate_problem(
    p: ProblemDef,
    points=None,
    seed: int = 0,
    n_points: int = 10,
    scale: float = 0.1,
    fd_tol: float = 1e-5,
) -> None:
    """Cross-check the supplied derivatives at sampled points.

    Verifies jac_G against central finite differences of G (relative
    tolerance `fd_tol`), symmetry of hess_L to 1e-10 and affinity of
    hess_L in the multiplier to 1e-10.  Raises ValueError on the first
    violation.
    """
    rng = np.random.default_rng(seed)
    if points is None:
        points = [
            p.Z.vector(scale * rng.standard_normal(p.Z.dim)) for _ in range(n_points)
        ]
    for z in points:
        J = np.asarray(p.jac_G(z), dtype=float)
        Jfd = np.empty_like(J)
        for j in range(p.Z.dim):
            step = 1e-6 * (1.0 + abs(z.coords[j]))
            e = np.zeros(p.Z.dim)
            e[j] = step
            gp = p.G(p.Z.vector(z.coords + e)).coords
            gm = p.G(p.Z.vector(z.coords - e)).coords
            Jfd[:, j] = (gp - gm) / (2.0 * step)
        scale_J = max(np.abs(J).max(), 1.0)
        err = np.abs(J - Jfd).max()
        if err > fd_tol * scale_J:
            raise ValueError(
                f"jac_G disagrees with finite differences: {err:.3e} vs "
                f"tolerance {fd_tol * scale_J:.3e}"
            )
        lam1 = p.Y.functional(rng.standard_normal(p.Y.dim))
        lam2 = p.Y.functional(rng.standard_normal(p.Y.dim))
        H0 = np.asarray(p.hess_L(z, p.Y.zero_functional()), dtype=float)
        for lam in (lam1, lam2):
            H = np.asarray(p.hess_L(z, lam), dtype=float)
            scale_H = max(np.abs(H).max(), 1.0)
            if np.abs(H - H.T).max() > 1e-10 * scale_H:
                raise ValueError("hess_L is not symmetric to 1e-10")
        H1 = np.asarray(p.hess_L(z, lam1), dtype=float)
        H2 = np.asarray(p.hess_L(z, lam2), dtype=float)
        H12 = np.asarray(
            p.hess_L(z, p.Y.functional(lam1.coeffs + lam2.coeffs)), dtype=float
        )
        lin_err = np.abs((H12 - H0) - ((H1 - H0) + (H2 - H0))).max()
        if lin_err > 1e-10 * max(np.abs(H12).max(), 1.0):
            raise ValueError("hess_L is not affine in the multiplier to 1e-10")
