"""Equilibria of the two control laws and the price of signal-anticipation.

The taking law settles at the minimizer of

    F(q) = sum_i C_i(q_i) + 1/2 q^T X q + q^T dv,

the anticipating law at the minimizer of

    W(q) = F(q) + 1/2 sum_i Xii q_i^2,

where C_i is the provisioning cost and dv the constant voltage offset.  PoSA
is F at the anticipating equilibrium minus F at the taking one; with pure
quadratic costs and no boxes it equals a quadratic form in dv whose kernel
matrix has closed-form spectral bounds.  All bound fields reported here
carry the 1/2 factor of the worst-case metric so every number in a report
is directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .controls import ControlSpec
from .dynamics import OperatingConstants
from .sensitivity import SensitivitySet, chain_eigen_bounds


class NotUnconstrainedError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


class MaxIterError(RuntimeError):
    pass


def objective_F(S: SensitivitySet, ctrl: ControlSpec, vt: OperatingConstants,
                q: np.ndarray) -> float:
    """Global cost targeted by the signal-taking law."""
    q = np.asarray(q, dtype=float)
    return ctrl.cost(q) + 0.5 * float(q @ S.X @ q) + float(q @ vt.delta_v_tilde)


def objective_W(S: SensitivitySet, ctrl: ControlSpec, vt: OperatingConstants,
                q: np.ndarray) -> float:
    """Global cost whose minimizer is the anticipating fixed point."""
    q = np.asarray(q, dtype=float)
    return objective_F(S, ctrl, vt, q) + 0.5 * float(np.sum(np.diag(S.X) * q * q))


@dataclass(frozen=True)
class EquilibriumResult:
    q_star: np.ndarray
    v_star: np.ndarray
    F_value: float
    solver: str
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class NashResult:
    q_a: np.ndarray
    W_value: float
    F_at_qa: float
    solver: str
    iterations: int = 0
    residual: float = 0.0


def _spd_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(M, lower=True), b)
    except np.linalg.LinAlgError as exc:  # defensive: valid X, Y keep M SPD
        raise SingularSystemError(str(exc)) from exc


def solve_quadratic(S: SensitivitySet, Y, vt: OperatingConstants, which: str,
                    ctrl: ControlSpec | None = None):
    """Closed-form equilibrium for pure quadratic costs, no boxes.

    which="equilibrium" solves (X+Y) q = -dv, which="nash" solves
    (X+D+Y) q = -dv, both by Cholesky (the factorization doubles as the
    positive-definiteness assertion).  Pass the active ControlSpec to verify
    the instance really is unconstrained quadratic.
    """
    if ctrl is not None and not ctrl.unconstrained_quadratic:
        raise NotUnconstrainedError(
            "deadbands or finite reactive boxes present; use solve_iterative"
        )
    Y = np.asarray(Y, dtype=float)
    Yd = np.diag(Y) if Y.ndim == 2 else Y
    if np.any(Yd <= 0):
        raise ValueError("cost coefficients must be positive")
    dv = vt.delta_v_tilde
    M = S.X + np.diag(Yd)
    if which == "equilibrium":
        q = -_spd_solve(M, dv)
        F = 0.5 * float(q @ M @ q) + float(q @ dv)
        return EquilibriumResult(q_star=q, v_star=S.X @ q + vt.v_tilde, F_value=F,
                                 solver="closed_form")
    if which == "nash":
        N = M + np.diag(np.diag(S.X))
        q = -_spd_solve(N, dv)
        W = 0.5 * float(q @ N @ q) + float(q @ dv)
        F = 0.5 * float(q @ M @ q) + float(q @ dv)
        return NashResult(q_a=q, W_value=W, F_at_qa=F, solver="closed_form")
    raise ValueError(f"which must be 'equilibrium' or 'nash', got {which!r}")


def _coordinate_minimizers(objective: str, S: SensitivitySet, ctrl: ControlSpec,
                           s: np.ndarray, q: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Exact per-coordinate minimizers given s = X q (vectorized)."""
    xii = np.diag(S.X)
    c = s - xii * q + dv
    curv = ctrl.y + (xii if objective == "F" else 2.0 * xii)
    half_delta = 0.5 * ctrl.delta
    # soft-threshold of the linear term against the |q| kink
    shrunk = np.where(c > half_delta, c - half_delta, np.where(c < -half_delta, c + half_delta, 0.0))
    return ctrl.project(-shrunk / curv)


def solve_iterative(objective: str, S: SensitivitySet, ctrl: ControlSpec,
                    vt: OperatingConstants, q0: np.ndarray | None = None,
                    tol: float = 1e-10, max_iter: int = 200_000):
    """Projected cyclic coordinate descent on F or W with exact line minimization.

    Handles deadband costs and reactive boxes.  Stops when the stationarity
    residual max_i |q_i - argmin_i| drops below tol; this residual is zero
    exactly at the unique optimum because both objectives are strictly
    convex with separable nonsmooth parts.
    """
    if objective not in ("F", "W"):
        raise ValueError("objective must be 'F' or 'W'")
    n = S.n
    dv = vt.delta_v_tilde
    xii = np.diag(S.X)
    curv = ctrl.y + (xii if objective == "F" else 2.0 * xii)
    half_delta = 0.5 * ctrl.delta
    q = np.zeros(n) if q0 is None else np.asarray(q0, dtype=float).copy()
    s = S.X @ q

    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for i in range(n):
            c = s[i] - xii[i] * q[i] + dv[i]
            if c > half_delta[i]:
                target = -(c - half_delta[i]) / curv[i]
            elif c < -half_delta[i]:
                target = -(c + half_delta[i]) / curv[i]
            else:
                target = 0.0
            target = min(ctrl.q_max[i], max(ctrl.q_min[i], target))
            dq = target - q[i]
            if dq != 0.0:
                s += S.X[:, i] * dq
                q[i] = target
        residual = float(np.max(np.abs(q - _coordinate_minimizers(objective, S, ctrl, s, q, dv))))
        if residual < tol:
            break
    else:
        raise MaxIterError(f"coordinate descent stalled at residual {residual:.3e}")

    if objective == "F":
        return EquilibriumResult(
            q_star=q, v_star=S.X @ q + vt.v_tilde, F_value=objective_F(S, ctrl, vt, q),
            solver="iterative", iterations=it, residual=residual,
        )
    return NashResult(
        q_a=q, W_value=objective_W(S, ctrl, vt, q), F_at_qa=objective_F(S, ctrl, vt, q),
        solver="iterative", iterations=it, residual=residual,
    )


def optimality_residual(objective: str, S: SensitivitySet, ctrl: ControlSpec,
                        vt: OperatingConstants, q: np.ndarray) -> float:
    """Stationarity measure: sup-norm distance to the coordinate minimizers."""
    q = np.asarray(q, dtype=float)
    s = S.X @ q
    return float(np.max(np.abs(q - _coordinate_minimizers(objective, S, ctrl, s, q,
                                                          vt.delta_v_tilde))))


def pi_matrix(S: SensitivitySet, Y) -> np.ndarray:
    """Kernel of the quadratic PoSA form:

        (X+D+Y)^{-1} D (X+Y)^{-1} D (X+D+Y)^{-1},

    symmetric and positive definite whenever every bus has positive
    self-sensitivity.  Valid for pure quadratic costs without boxes.
    """
    Y = np.asarray(Y, dtype=float)
    Yd = np.diag(Y) if Y.ndim == 2 else Y
    d = np.diag(S.X)
    M = S.X + np.diag(Yd)
    N = M + np.diag(d)
    cN = cho_factor(N, lower=True)
    cM = cho_factor(M, lower=True)
    Z = cho_solve(cN, np.diag(d))          # (X+D+Y)^{-1} D
    Pi = Z @ cho_solve(cM, Z.T)
    return 0.5 * (Pi + Pi.T)


@dataclass(frozen=True)
class PosaReport:
    """Worst-case PoSA with its spectral bounds, all in the same 1/2-units.

    lower is the raw spectral lower bound (may be negative on small
    networks); lower_clamped additionally applies the known nonnegativity
    of the metric.  posa is the realized gap for the instance's actual
    voltage offset when one was supplied.
    """

    posa_max: float
    upper: float
    refined_upper: float
    lower: float
    lower_clamped: float
    gap_bound: float
    d: float
    y: float
    posa: float | None = None
    worst_direction: np.ndarray | None = None

    def ordering_ok(self, rtol: float = 1e-9) -> bool:
        slack = rtol * max(1.0, abs(self.upper))
        return (
            self.lower <= self.posa_max + slack
            and self.posa_max <= self.refined_upper + slack
            and self.refined_upper <= self.upper + slack
            and self.upper - self.lower <= self.gap_bound + slack
        )


def posa_report(S: SensitivitySet, Y, vt: OperatingConstants | None = None,
                want_direction: bool = True) -> PosaReport:
    """All PoSA bounds for a quadratic unconstrained instance.

    Ordering invariants (lower <= posa_max <= refined_upper <= upper and
    upper - lower <= gap bound) are asserted before returning.  When
    operating constants are given, the realized gap F(q_nash) - F(q_star)
    is computed from the closed-form solves as well.
    """
    Y = np.asarray(Y, dtype=float)
    Yd = np.diag(Y) if Y.ndim == 2 else Y
    d_vec = np.diag(S.X)
    M = S.X + np.diag(Yd)
    N = M + np.diag(d_vec)

    Pi = pi_matrix(S, Yd)
    if want_direction:
        w, V = np.linalg.eigh(Pi)
        lam_pi = float(w[-1])
        direction = V[:, -1]
    else:
        lam_pi = float(np.linalg.eigvalsh(Pi)[-1])
        direction = None

    lam_min_M = float(np.linalg.eigvalsh(M)[0])
    lam_min_N = float(np.linalg.eigvalsh(N)[0])
    lam_min_X = float(np.linalg.eigvalsh(S.X)[0])
    d = float(np.max(d_vec))
    y = float(np.min(Yd))

    Minv = cho_solve(cho_factor(M, lower=True), np.eye(S.n))
    Ninv = cho_solve(cho_factor(N, lower=True), np.eye(S.n))
    lower_mat = 0.5 * ((Minv - 2.0 * Ninv) + (Minv - 2.0 * Ninv).T)

    posa_max = 0.5 * lam_pi
    upper = 0.5 / lam_min_M
    factor = d * d / (lam_min_X + d + y) ** 2
    refined_upper = factor * upper
    lower = 0.5 * float(np.linalg.eigvalsh(lower_mat)[-1])
    gap_bound = 1.0 / lam_min_N

    posa = None
    if vt is not None:
        eq = solve_quadratic(S, Yd, vt, "equilibrium")
        na = solve_quadratic(S, Yd, vt, "nash")
        posa = na.F_at_qa - eq.F_value

    report = PosaReport(
        posa_max=posa_max, upper=upper, refined_upper=refined_upper, lower=lower,
        lower_clamped=max(0.0, lower), gap_bound=gap_bound, d=d, y=y, posa=posa,
        worst_direction=direction,
    )
    if not report.ordering_ok():
        raise AssertionError(
            f"bound ordering violated: lower={lower:.3e} posa_max={posa_max:.3e} "
            f"refined={refined_upper:.3e} upper={upper:.3e} gap={gap_bound:.3e}"
        )
    return report


def posa_constrained(S: SensitivitySet, ctrl: ControlSpec, vt: OperatingConstants,
                     tol: float = 1e-10) -> float:
    """Realized PoSA under deadbands/boxes, via the iterative solvers."""
    eq = solve_iterative("F", S, ctrl, vt, tol=tol)
    na = solve_iterative("W", S, ctrl, vt, tol=tol)
    return na.F_at_qa - eq.F_value


def _chain_lambda_min(n: int, a: float) -> float:
    return a / (2.0 + 2.0 * math.cos(2.0 * math.pi / (2 * n + 1)))


def chain_upper_bound_uniform(n: int, a: float, y: float) -> float:
    """Closed-form worst-case bound for the uniform chain, in 1/2-units.

    Uses the exact smallest reactance eigenvalue of the uniform chain and the
    deepest bus's self-sensitivity d = a*n; approaches 1/(2(y + a/4)) as the
    chain grows.
    """
    if n < 1 or a <= 0 or y <= 0:
        raise ValueError("need n >= 1, a > 0, y > 0")
    lam = _chain_lambda_min(n, a)
    d = a * n
    return 0.5 * d * d / ((lam + d + y) ** 2 * (y + lam))


def chain_upper_bound_range(n: int, a: float, b: float, d: float, y: float) -> float:
    """Worst-case bound for any chain with line reactances in [a, b], 1/2-units.

    d is the instance's largest self-sensitivity and y its smallest cost
    coefficient; the smallest reactance eigenvalue is replaced by its
    uniform-a lower bracket, which only loosens the bound.
    """
    if d <= 0 or y <= 0:
        raise ValueError("need d > 0 and y > 0")
    lam_lower, _ = chain_eigen_bounds(n, a, b, k=n)
    return 0.5 * d * d / ((lam_lower + d + y) ** 2 * (y + lam_lower))


__all__ = [
    "EquilibriumResult", "NashResult", "PosaReport",
    "objective_F", "objective_W", "solve_quadratic", "solve_iterative",
    "optimality_residual", "pi_matrix", "posa_report", "posa_constrained",
    "chain_upper_bound_uniform", "chain_upper_bound_range",
    "NotUnconstrainedError", "SingularSystemError", "MaxIterError",
]
