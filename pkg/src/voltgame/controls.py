"""Droop controllers, their provisioning costs, and the anticipating response.

The droop curve is piecewise linear with a symmetric deadband of width delta
and slope alpha outside it; zero slope marks a bus with no controller.  The
anticipating response solves q = f(2*Xii*q + c) for the aggregate signal c,
which for droop has the same piecewise-linear shape with the tempered slope
beta = 1/(1/alpha + 2*Xii).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ZeroSlopeError(ValueError):
    pass


class EmptyBoxError(ValueError):
    pass


@dataclass(frozen=True)
class DroopParams:
    alpha: float
    delta: float = 0.0
    q_min: float = -math.inf
    q_max: float = math.inf

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("droop slope must be >= 0")
        if self.delta < 0:
            raise ValueError("deadband width must be >= 0")
        if self.q_min > self.q_max:
            raise EmptyBoxError(f"empty box [{self.q_min},{self.q_max}]")

    @property
    def y(self) -> float:
        """Quadratic cost coefficient 1/alpha."""
        if self.alpha == 0:
            raise ZeroSlopeError("alpha=0 bus has no controller; cost undefined")
        return 1.0 / self.alpha


@dataclass(frozen=True)
class QuadraticCost:
    """Pure quadratic provisioning cost y/2 * q^2 (droop with no deadband)."""

    y: float

    def __post_init__(self):
        if self.y <= 0:
            raise ValueError("cost coefficient must be positive")

    def as_droop(self, q_min: float = -math.inf, q_max: float = math.inf) -> DroopParams:
        return DroopParams(alpha=1.0 / self.y, delta=0.0, q_min=q_min, q_max=q_max)


def beta(alpha, xii):
    """Anticipating slope 1/(1/alpha + 2*Xii); strictly below alpha when Xii > 0."""
    alpha = np.asarray(alpha, dtype=float)
    xii = np.asarray(xii, dtype=float)
    if np.any(alpha <= 0):
        raise ZeroSlopeError("beta requires alpha > 0")
    return 1.0 / (1.0 / alpha + 2.0 * xii)


def _piecewise(slope, delta, u):
    up = np.maximum(u - delta / 2.0, 0.0)
    un = np.maximum(-u - delta / 2.0, 0.0)
    return -slope * up + slope * un


def droop_eval(p: DroopParams, u):
    """Reactive setpoint for voltage deviation u, before box projection."""
    return _piecewise(p.alpha, p.delta, np.asarray(u, dtype=float))


def droop_cost(p: DroopParams, q):
    """Provisioning cost of the droop curve: y/2 * q^2 + delta/2 * |q|.

    Convex, zero at q=0, even; its slope away from zero recovers the
    inverted droop curve extended by the deadband half-width.
    """
    if p.alpha == 0:
        raise ZeroSlopeError("alpha=0 bus has no controller; cost undefined")
    q = np.asarray(q, dtype=float)
    return 0.5 * p.y * q * q + 0.5 * p.delta * np.abs(q)


def project_box(q, lo, hi):
    """Clamp q into [lo, hi] elementwise."""
    if np.any(np.asarray(lo) > np.asarray(hi)):
        raise EmptyBoxError(f"empty box [{lo},{hi}]")
    return np.minimum(hi, np.maximum(lo, q))


def anticipating_response(p: DroopParams, xii: float, c):
    """Box-projected solution of q = f(2*Xii*q + c) for a droop controller.

    c aggregates the neighbours' influence plus the constant voltage offset;
    inside the deadband the response stays exactly zero.
    """
    b = beta(p.alpha, xii)
    q = _piecewise(b, p.delta, np.asarray(c, dtype=float))
    return project_box(q, p.q_min, p.q_max)


def solve_response_fixed_point(f, two_xii: float, c: float, tol: float = 1e-12,
                               max_iter: int = 200) -> float:
    """Bisection solve of q = f(two_xii*q + c) for any nonincreasing f.

    Supports tabulated or otherwise non-droop monotone controllers; also the
    independent check for the closed-form droop response.  phi(q) = q -
    f(two_xii*q + c) is strictly increasing, so a sign-bracketing bisection
    converges unconditionally.
    """
    def phi(q):
        return q - float(f(two_xii * q + c))

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if phi(lo) <= 0:
            break
        lo *= 2.0
    for _ in range(200):
        if phi(hi) >= 0:
            break
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if phi(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


class TabulatedControl:
    """Monotone control curve given by sample points, evaluated by interpolation.

    Points must be nonincreasing in the response; outside the sampled range
    the curve extends with the boundary slope held constant at zero slope
    (saturation).  The anticipating response for such a curve is computed by
    bisection rather than a closed form.
    """

    def __init__(self, u_points, q_points):
        u = np.asarray(u_points, dtype=float)
        q = np.asarray(q_points, dtype=float)
        if u.ndim != 1 or u.shape != q.shape or u.size < 2:
            raise ValueError("need matching 1-d sample arrays with >= 2 points")
        if np.any(np.diff(u) <= 0):
            raise ValueError("u samples must be strictly increasing")
        if np.any(np.diff(q) > 0):
            raise ValueError("control curve must be nonincreasing")
        self.u = u
        self.q = q

    def __call__(self, u):
        return np.interp(u, self.u, self.q)

    def anticipating_response(self, xii: float, c: float, q_min: float = -math.inf,
                              q_max: float = math.inf, tol: float = 1e-12) -> float:
        q = solve_response_fixed_point(self, 2.0 * xii, c, tol=tol)
        return float(project_box(q, q_min, q_max))


@dataclass(frozen=True)
class ControlSpec:
    """Per-actuator droop parameters as aligned arrays.

    Index k refers to the k-th actuator of whatever bus subset the caller is
    working on; all dynamics and equilibrium code consumes this form.
    """

    alpha: np.ndarray
    delta: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "delta", "q_min", "q_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        k = self.alpha.size
        if any(getattr(self, f).size != k for f in ("delta", "q_min", "q_max")):
            raise ValueError("control arrays must share one length")
        if np.any(self.alpha <= 0):
            raise ZeroSlopeError("ControlSpec covers actuators only; alpha must be > 0")
        if np.any(self.delta < 0):
            raise ValueError("deadband width must be >= 0")
        if np.any(self.q_min > self.q_max):
            raise EmptyBoxError("empty reactive box")
        if np.any(self.q_min > 0) or np.any(self.q_max < 0):
            raise EmptyBoxError("actuator box must contain 0")

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def y(self) -> np.ndarray:
        return 1.0 / self.alpha

    @property
    def unconstrained_quadratic(self) -> bool:
        return (
            bool(np.all(self.delta == 0))
            and bool(np.all(np.isneginf(self.q_min)))
            and bool(np.all(np.isposinf(self.q_max)))
        )

    def params(self, k: int) -> DroopParams:
        return DroopParams(
            alpha=float(self.alpha[k]),
            delta=float(self.delta[k]),
            q_min=float(self.q_min[k]),
            q_max=float(self.q_max[k]),
        )

    @classmethod
    def uniform(cls, n: int, alpha: float, delta: float = 0.0,
                q_min: float = -math.inf, q_max: float = math.inf) -> "ControlSpec":
        ones = np.ones(n)
        return cls(alpha * ones, delta * ones, q_min * ones, q_max * ones)

    @classmethod
    def quadratic(cls, y) -> "ControlSpec":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        n = y.size
        return cls(1.0 / y, np.zeros(n), np.full(n, -math.inf), np.full(n, math.inf))

    def eval_droop(self, u: np.ndarray) -> np.ndarray:
        """Vectorized droop response, pre-projection."""
        return _piecewise(self.alpha, self.delta, np.asarray(u, dtype=float))

    def eval_anticipating(self, xii: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Vectorized closed-form anticipating response, pre-projection."""
        b = beta(self.alpha, xii)
        return _piecewise(b, self.delta, np.asarray(c, dtype=float))

    def cost(self, q: np.ndarray) -> float:
        q = np.asarray(q, dtype=float)
        return float(np.sum(0.5 * self.y * q * q + 0.5 * self.delta * np.abs(q)))

    def project(self, q: np.ndarray) -> np.ndarray:
        return np.minimum(self.q_max, np.maximum(self.q_min, q))
