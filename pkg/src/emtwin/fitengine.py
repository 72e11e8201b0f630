"""Shared nonlinear least-squares machinery.

Every fit in the package (flux map, notch lineshape, Lorentzian peaks,
sideband amplitude) goes through :func:`solve` so that convergence semantics,
covariance estimates, and error reporting are identical everywhere.

The solver is a Levenberg-Marquardt damped Gauss-Newton iteration with a
forward-difference Jacobian. Box bounds are handled by a smooth change of
variables (a sine transform for two-sided bounds, a hyperbola for one-sided
ones), so the inner iteration is always unconstrained. The solver is fully
deterministic: the same problem yields a bit-identical outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteResidual, SingularNormalEquations

_LAMBDA_INIT = 1e-12
_LAMBDA_UP = 10.0
_LAMBDA_DOWN = 10.0
_LAMBDA_MAX = 1e15


@dataclass
class FitProblem:
    """A weighted-residual least-squares problem.

    Parameters
    ----------
    residual : callable
        Maps a parameter vector to a residual vector (length >= n_params).
    p0 : array
        Initial parameter values, strictly inside any bounds.
    lower, upper : array or None
        Per-parameter box bounds; -inf/+inf entries (or None) mean unbounded.
    x_scale : array or None
        Characteristic magnitude per parameter. Parameters are divided by
        this before the bound transform so the internal iteration is O(1)
        regardless of the physical units. Defaults to all ones.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    p0: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    max_iter: int = 500
    gtol: float = 1e-10
    xtol: float = 1e-12
    ftol: float = 1e-12
    x_scale: np.ndarray | None = None

    def __post_init__(self):
        self.p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        n = self.p0.size
        self.lower = self._as_bound(self.lower, n, -np.inf)
        self.upper = self._as_bound(self.upper, n, np.inf)
        if np.any(self.lower >= self.upper):
            raise ValueError("bounds must satisfy lower < upper")
        if np.any(self.p0 <= self.lower) or np.any(self.p0 >= self.upper):
            raise ValueError("initial parameters must lie strictly within bounds")
        if self.x_scale is None:
            self.x_scale = np.ones(n)
        else:
            self.x_scale = np.atleast_1d(np.asarray(self.x_scale, dtype=float))
            if np.any(self.x_scale <= 0) or self.x_scale.size != n:
                raise ValueError("x_scale must be positive and match p0")

    @staticmethod
    def _as_bound(b, n, fill):
        if b is None:
            return np.full(n, fill)
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if b.size != n:
            raise ValueError("bound length must match p0")
        return b


@dataclass
class FitOutcome:
    params: np.ndarray
    covariance: np.ndarray
    residual_rms: float
    iterations: int
    termination: str
    null_directions: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


class _Transform:
    """Smooth map between the unconstrained internal vector and parameters."""

    def __init__(self, lower, upper, scale):
        self.scale = scale
        self.lo = lower / scale
        self.hi = upper / scale
        self.two_sided = np.isfinite(self.lo) & np.isfinite(self.hi)
        self.low_only = np.isfinite(self.lo) & ~np.isfinite(self.hi)
        self.up_only = ~np.isfinite(self.lo) & np.isfinite(self.hi)

    def to_params(self, v):
        q = v.copy()
        m = self.two_sided
        if m.any():
            q[m] = self.lo[m] + (self.hi[m] - self.lo[m]) * (np.sin(v[m]) + 1.0) / 2.0
        m = self.low_only
        if m.any():
            q[m] = self.lo[m] - 1.0 + np.sqrt(v[m] ** 2 + 1.0)
        m = self.up_only
        if m.any():
            q[m] = self.hi[m] + 1.0 - np.sqrt(v[m] ** 2 + 1.0)
        return q * self.scale

    def from_params(self, p):
        q = p / self.scale
        v = q.copy()
        m = self.two_sided
        if m.any():
            frac = 2.0 * (q[m] - self.lo[m]) / (self.hi[m] - self.lo[m]) - 1.0
            v[m] = np.arcsin(np.clip(frac, -1.0, 1.0))
        m = self.low_only
        if m.any():
            v[m] = np.sqrt(np.maximum((q[m] - self.lo[m] + 1.0) ** 2 - 1.0, 0.0))
        m = self.up_only
        if m.any():
            v[m] = -np.sqrt(np.maximum((self.hi[m] - q[m] + 1.0) ** 2 - 1.0, 0.0))
        return v

    def jac_diag(self, v):
        """Diagonal of dp/dv at the internal point v."""
        d = np.ones_like(v)
        m = self.two_sided
        if m.any():
            d[m] = (self.hi[m] - self.lo[m]) / 2.0 * np.cos(v[m])
        m = self.low_only
        if m.any():
            d[m] = v[m] / np.sqrt(v[m] ** 2 + 1.0)
        m = self.up_only
        if m.any():
            d[m] = -v[m] / np.sqrt(v[m] ** 2 + 1.0)
        return d * self.scale


def _forward_jacobian(fun, v, r0):
    n = v.size
    jac = np.empty((r0.size, n))
    for j in range(n):
        step = max(1e-6 * abs(v[j]), 1e-12)
        vj = v.copy()
        vj[j] += step
        rj = fun(vj)
        jac[:, j] = (rj - r0) / step
    return jac


def solve(problem: FitProblem) -> FitOutcome:
    """Minimize the sum of squared residuals of `problem`.

    Raises
    ------
    NonFiniteResidual
        If the residual is not finite at the initial parameters.
    SingularNormalEquations
        If a parameter has no effect on the residuals at the starting point
        (an exactly zero Jacobian column); the offending directions are
        attached to the exception.
    """
    tr = _Transform(problem.lower, problem.upper, problem.x_scale)
    v = tr.from_params(problem.p0)

    def resid_v(vv):
        return np.atleast_1d(np.asarray(problem.residual(tr.to_params(vv)), dtype=float))

    r = resid_v(v)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residual not finite at initial parameters")
    if r.size < v.size:
        raise ValueError("residual vector must be at least as long as the parameters")

    cost = float(r @ r)
    jac = _forward_jacobian(resid_v, v, r)
    dead = np.where(~jac.any(axis=0))[0]
    if dead.size:
        dirs = np.eye(v.size)[dead]
        raise SingularNormalEquations(
            f"parameters {dead.tolist()} have no effect on the residuals", dirs
        )

    lam = _LAMBDA_INIT
    termination = "max_iterations"
    iterations = 0
    while iterations < problem.max_iter:
        iterations += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        if np.max(np.abs(grad)) < problem.gtol:
            termination = "gradient"
            break
        diag = np.maximum(np.diag(jtj), 1e-300)
        try:
            step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad, rcond=None)[0]

        v_try = v + step
        r_try = resid_v(v_try)
        finite = np.all(np.isfinite(r_try))
        cost_try = float(r_try @ r_try) if finite else np.inf

        if cost_try < cost:
            rel_step = np.linalg.norm(step) / max(np.linalg.norm(v), 1e-300)
            rel_decrease = (cost - cost_try) / max(cost, 1e-300)
            v, r, cost = v_try, r_try, cost_try
            jac = _forward_jacobian(resid_v, v, r)
            lam = max(lam / _LAMBDA_DOWN, 1e-14)
            if rel_step < problem.xtol:
                termination = "step"
                break
            if rel_decrease < problem.ftol:
                termination = "cost"
                break
        else:
            # A rejected step that is already negligibly small means the
            # iterate sits at the floating-point minimum.
            if np.linalg.norm(step) < problem.xtol * max(np.linalg.norm(v), 1e-300):
                termination = "step"
                break
            lam *= _LAMBDA_UP
            if lam > _LAMBDA_MAX:
                termination = "stalled"
                break

    params = tr.to_params(v)
    m, n = r.size, v.size
    rms = float(np.sqrt(cost / m))
    sigma2 = cost / max(m - n, 1)

    # Covariance via pseudo-inverse of J^T J, mapped back to parameter space.
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    tol = max(m, n) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    inv_s2 = np.where(keep, 1.0 / np.where(keep, s, 1.0) ** 2, 0.0)
    cov_v = (vt.T * inv_s2) @ vt * sigma2
    dpdv = tr.jac_diag(v)
    cov_p = cov_v * np.outer(dpdv, dpdv)

    null_v = vt[~keep]
    if null_v.size:
        null_p = null_v * dpdv
        norms = np.linalg.norm(null_p, axis=1, keepdims=True)
        null_p = null_p / np.where(norms > 0, norms, 1.0)
    else:
        null_p = np.empty((0, n))

    return FitOutcome(
        params=params,
        covariance=cov_p,
        residual_rms=rms,
        iterations=iterations,
        termination=termination,
        null_directions=null_p,
    )
