"""Outer stabilized SQP loop: KKT test, rho selection, subproblem dispatch.

Each iteration tests the computable KKT residual, picks the stabilization
weight rho_k and solves one saddle-point subproblem.  The default rho rule
is proportional to the computable error proxy |L'_z|_{Z*} + |G|_Y, clamped
to [rho_min, sigma1]; a fixed rule and a true-error oracle rule (for test
harnesses with a registered reference solution) are also available.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ReferenceSolution, multiplier_distance
from .model import KKTResidual, ProblemDef
from .spaces import Functional, PrimalVec
from .subproblem import (
    NoConvergence,
    SaddleSystem,
    SingularSubproblem,
    solve_cone,
    solve_equality,
)


@dataclass(frozen=True)
class ErrorProportional:
    """rho_k = clamp(theta * (|L'_z| + |G|), rho_min, sigma1)."""

    theta: float = 1.0


@dataclass(frozen=True)
class Fixed:
    """rho_k = rho, unclamped; rho = 0 reproduces classical SQP."""

    rho: float


@dataclass(frozen=True)
class TrueErrorOracle:
    """rho_k = clamp(sigma0 * (|z - z*| + dist(lam, multiplier set))).

    Needs a registered reference solution; intended for harnesses that
    validate the convergence theory under its exact hypothesis.
    """

    sigma0: float = 1.0


RhoRule = ErrorProportional | Fixed | TrueErrorOracle


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50
    rho_rule: RhoRule = field(default_factory=ErrorProportional)
    sigma1: float = 1.0
    rho_min: float = 1e-14

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.rho_min <= self.sigma1:
            raise ValueError("need 0 < rho_min <= sigma1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    SUBPROBLEM_FAILURE = "SubproblemFailure"


@dataclass
class IterateRecord:
    k: int
    z: PrimalVec
    lam: Functional
    rho: float
    kkt: KKTResidual
    err_z: float | None = None
    dist_lambda: float | None = None
    total_err: float | None = None


@dataclass
class SolveReport:
    history: list[IterateRecord]
    status: SolveStatus
    observed_orders: list[float]
    gamma_hat: float | None = None
    failure_index: int | None = None
    failure_message: str | None = None


def rho_rule(
    p: ProblemDef,
    z: PrimalVec,
    lam: Functional,
    opts: SolverOptions,
    reference: ReferenceSolution | None = None,
) -> float:
    """Stabilization weight at (z, lam) under the configured rule."""
    rule = opts.rho_rule
    if isinstance(rule, Fixed):
        return rule.rho
    if isinstance(rule, ErrorProportional):
        eta = p.Z.dual_norm(p.lagrangian_grad(z, lam)) + p.Y.norm(p.G(z))
        return float(np.clip(rule.theta * eta, opts.rho_min, opts.sigma1))
    if isinstance(rule, TrueErrorOracle):
        if reference is None:
            raise ValueError("TrueErrorOracle needs a registered reference solution")
        err = p.Z.norm_arr(z.coords - reference.z_star.coords)
        dist, _ = multiplier_distance(reference, lam)
        return float(np.clip(rule.sigma0 * (err + dist), opts.rho_min, opts.sigma1))
    raise TypeError(f"unknown rho rule {rule!r}")


def observed_order_entries(errs) -> list[tuple[int, float]]:
    """(index, order) pairs for every admissible error triple.

    The order at index k is log(e_{k+1}/e_k) / log(e_k/e_{k-1}); triples
    touching errors below 1e-15 (resolution floor) or with a vanishing
    denominator are omitted.
    """
    es = [float(e) for e in errs]
    entries: list[tuple[int, float]] = []
    for k in range(1, len(es) - 1):
        if min(es[k - 1 : k + 2]) < 1e-15:
            continue
        den = math.log(es[k] / es[k - 1])
        if abs(den) < 1e-12:
            continue
        entries.append((k, math.log(es[k + 1] / es[k]) / den))
    return entries


def observed_order(errs) -> list[float]:
    """Convergence orders for each admissible error triple, in order."""
    return [p for _, p in observed_order_entries(errs)]


def _project_into_polar(p: ProblemDef, lam: Functional) -> Functional:
    """Clip the generator pairings of lam to be nonpositive."""
    pairings = p.cone.pairings(lam)
    excess = np.maximum(pairings, 0.0)
    if excess.max() <= 1e-12 * (1.0 + p.Y.dual_norm(lam)):
        return lam
    warnings.warn(
        "initial multiplier is outside the polar cone; projecting pairings",
        stacklevel=3,
    )
    c = np.linalg.solve(p.cone.gram, excess)
    shift = p.Y.mass @ (p.cone.generator_matrix @ c)
    return Functional(p.Y, lam.coeffs - shift)


def run(
    p: ProblemDef,
    z0: PrimalVec,
    lam0: Functional,
    opts: SolverOptions | None = None,
    reference: ReferenceSolution | None = None,
) -> SolveReport:
    """Run the stabilized SQP iteration from (z0, lam0).

    Stops on kkt.total <= tol (Converged), after max_iter subproblem
    solves (MaxIter), or when a subproblem factorization fails
    (SubproblemFailure, with the failing iteration index).  When a
    reference solution is given, per-iterate errors and the empirical
    error-estimate constant gamma_hat are recorded and convergence orders
    are measured on the true error; otherwise on the KKT residual.
    """
    opts = opts if opts is not None else SolverOptions()
    if isinstance(opts.rho_rule, TrueErrorOracle) and reference is None:
        raise ValueError("TrueErrorOracle needs a registered reference solution")
    z, lam = z0, lam0
    if p.cone.m > 0:
        lam = _project_into_polar(p, lam)
    history: list[IterateRecord] = []
    status = SolveStatus.MAX_ITER
    failure_index: int | None = None
    failure_message: str | None = None
    for k in range(opts.max_iter + 1):
        kkt = p.kkt_residual(z, lam)
        rho = rho_rule(p, z, lam, opts, reference)
        rec = IterateRecord(k=k, z=z, lam=lam, rho=rho, kkt=kkt)
        if reference is not None:
            rec.err_z = p.Z.norm_arr(z.coords - reference.z_star.coords)
            rec.dist_lambda, _ = multiplier_distance(reference, lam)
            rec.total_err = rec.err_z + rec.dist_lambda
        history.append(rec)
        if kkt.total <= opts.tol:
            status = SolveStatus.CONVERGED
            break
        if k == opts.max_iter:
            status = SolveStatus.MAX_ITER
            break
        sys = SaddleSystem(
            H=p.hess_L(z, lam),
            J=p.jac_G(z),
            g=p.grad_f(z).coeffs,
            Gval=p.G(z).coords,
            rho=rho,
            lamk=lam,
            zk=z,
            spaceZ=p.Z,
            spaceY=p.Y,
        )
        try:
            if p.cone.m == 0:
                sol = solve_equality(sys)
            else:
                sol = solve_cone(sys, p.cone)
        except (SingularSubproblem, NoConvergence) as exc:
            status = SolveStatus.SUBPROBLEM_FAILURE
            failure_index = k
            failure_message = str(exc)
            break
        z, lam = sol.z_next, sol.lam_next
    if reference is not None:
        errs = [r.total_err for r in history]
    else:
        errs = [r.kkt.total for r in history]
    orders = observed_order([e for e in errs if e is not None])
    gamma_hat = None
    if reference is not None:
        ratios = []
        for r in history:
            eta = r.kkt.stationarity + r.kkt.feasibility
            if eta > 1e-15 and r.total_err is not None:
                ratios.append(r.total_err / eta)
        gamma_hat = max(ratios) if ratios else None
    return SolveReport(
        history=history,
        status=status,
        observed_orders=orders,
        gamma_hat=gamma_hat,
        failure_index=failure_index,
        failure_message=failure_message,
    )
