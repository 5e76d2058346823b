"""Vector fields, trajectories, and tangent flows.

Integration is delegated to scipy's adaptive Runge-Kutta solvers behind a
dense-output :class:`Trajectory`.  Angle coordinates are integrated on the
universal cover (never wrapped mid-integration); wrapping happens only in
:func:`distance`, :func:`coord_difference`, and :func:`wrap_point`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_NORM_BOUND",
    "FlowDivergenceError",
    "ConservedQuantity",
    "VectorFieldSpec",
    "Trajectory",
    "integrate",
    "flow_at",
    "tangent_flow",
    "coord_difference",
    "distance",
    "wrap_point",
    "validate_jacobian",
]

DEFAULT_TOL = 1e-9
DEFAULT_NORM_BOUND = 1e6


class FlowDivergenceError(RuntimeError):
    """The state norm crossed the divergence bound during integration."""


@dataclass(frozen=True)
class ConservedQuantity:
    """A first integral together with a global Lipschitz bound.

    Parameters
    ----------
    func : callable
        Maps a state ``x`` to the conserved value ``Q(x)``.
    lipschitz : float
        A constant ``L`` with ``|Q(a) - Q(b)| <= L * d(a, b)`` everywhere.
    name : str
        Label used in reports and certificates.
    """

    func: Callable[[np.ndarray], float]
    lipschitz: float
    name: str = "Q"

    def __post_init__(self) -> None:
        if not np.isfinite(self.lipschitz) or self.lipschitz <= 0:
            raise ValueError("lipschitz bound must be positive and finite")


@dataclass(frozen=True)
class VectorFieldSpec:
    """An autonomous C^1 vector field on R^n, some coordinates periodic.

    Parameters
    ----------
    name : str
        Identifier used in reports.
    dim : int
        State dimension.
    field : callable
        ``x -> dx/dt``, both of shape ``(dim,)``.
    jacobian : callable
        ``x -> (dim, dim)`` derivative of ``field``.
    coord_kinds : sequence, optional
        One entry per coordinate: the string ``"linear"`` or a pair
        ``("angle", period)``.  Defaults to all linear.
    conserved : ConservedQuantity, optional
        A quantity constant along every orbit.
    """

    name: str
    dim: int
    field: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    coord_kinds: tuple = ()
    conserved: Optional[ConservedQuantity] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        kinds = tuple(self.coord_kinds) if self.coord_kinds else ("linear",) * self.dim
        if len(kinds) != self.dim:
            raise ValueError(f"coord_kinds has {len(kinds)} entries for dim {self.dim}")
        periods = np.full(self.dim, np.nan)
        for i, kind in enumerate(kinds):
            if kind == "linear":
                continue
            if (
                isinstance(kind, (tuple, list))
                and len(kind) == 2
                and kind[0] == "angle"
            ):
                period = float(kind[1])
                if not np.isfinite(period) or period <= 0:
                    raise ValueError(f"coordinate {i}: angle period must be positive")
                periods[i] = period
                continue
            raise ValueError(f"coordinate {i}: unknown kind {kind!r}")
        object.__setattr__(self, "coord_kinds", kinds)
        object.__setattr__(self, "_periods", periods)
        object.__setattr__(self, "_angle_mask", ~np.isnan(periods))

    @property
    def periods(self) -> np.ndarray:
        """Per-coordinate period, NaN on linear coordinates."""
        return self._periods

    @property
    def angle_mask(self) -> np.ndarray:
        return self._angle_mask

    def field_at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.field(np.asarray(x, dtype=float)), dtype=float)

    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.jacobian(np.asarray(x, dtype=float)), dtype=float)


def coord_difference(spec: VectorFieldSpec, a, b) -> np.ndarray:
    """Componentwise ``a - b`` with angle coordinates wrapped to (-P/2, P/2]."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    mask = spec.angle_mask
    if mask.any():
        p = spec.periods[mask]
        d[..., mask] = (d[..., mask] + p / 2.0) % p - p / 2.0
    return d


def distance(spec: VectorFieldSpec, a, b) -> float:
    """Euclidean distance with shortest-arc wrapping on angle coordinates."""
    return float(np.linalg.norm(coord_difference(spec, a, b)))


def wrap_point(spec: VectorFieldSpec, x) -> np.ndarray:
    """Canonical representative with angle coordinates reduced to [0, P)."""
    out = np.array(x, dtype=float)
    mask = spec.angle_mask
    if mask.any():
        out[..., mask] = out[..., mask] % spec.periods[mask]
    return out


class Trajectory:
    """Dense-output solution of ``dx/dt = field(x)`` over one time span.

    Evaluation at the initial time returns the initial state exactly.
    ``escaped`` marks a run terminated early by the divergence guard; such a
    trajectory is valid on the reached span only.
    """

    def __init__(self, spec, x0, t0, t_end, interp, tol, escaped=False, requested_t1=None):
        self.spec = spec
        self.x0 = np.array(x0, dtype=float)
        self.t0 = float(t0)
        self.t_end = float(t_end)
        self.tol = float(tol)
        self.escaped = bool(escaped)
        self.requested_t1 = float(t_end if requested_t1 is None else requested_t1)
        self._interp = interp

    @property
    def span(self) -> tuple:
        lo, hi = sorted((self.t0, self.t_end))
        return (lo, hi)

    def _check_time(self, t: float) -> None:
        lo, hi = self.span
        slack = 1e-9 * max(1.0, hi - lo)
        if lo - slack <= t <= hi + slack:
            return
        if self.escaped:
            raise FlowDivergenceError(
                f"trajectory from {self.x0} escaped at t={self.t_end:.6g}; "
                f"requested t={t:.6g}"
            )
        raise ValueError(f"t={t:.6g} outside integrated span [{lo:.6g}, {hi:.6g}]")

    def at(self, t: float) -> np.ndarray:
        t = float(t)
        self._check_time(t)
        if t == self.t0:
            return self.x0.copy()
        return np.asarray(self._interp(t), dtype=float)

    def at_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        for t in ts:
            self._check_time(float(t))
        out = np.asarray(self._interp(ts), dtype=float).T
        exact = ts == self.t0
        if exact.any():
            out[exact] = self.x0
        return out

    def __call__(self, t):
        ts = np.asarray(t, dtype=float)
        if ts.ndim == 0:
            return self.at(float(ts))
        return self.at_many(ts)


def _escape_event(norm_bound: float):
    def ev(t, y):
        return norm_bound - float(np.linalg.norm(y))

    ev.terminal = True
    ev.direction = -1
    return ev


def integrate(
    spec: VectorFieldSpec,
    x0,
    t_span,
    tol: float = DEFAULT_TOL,
    norm_bound: float = DEFAULT_NORM_BOUND,
    on_escape: str = "raise",
) -> Trajectory:
    """Integrate from ``x0`` over ``t_span`` (either time direction).

    Parameters
    ----------
    tol : float
        Local error tolerance (relative; absolute is ``tol / 100``).
    norm_bound : float
        Divergence guard; crossing it raises :class:`FlowDivergenceError`
        unless ``on_escape="truncate"``, which returns the reached part.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({spec.dim},)")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if np.linalg.norm(x0) >= norm_bound:
        raise FlowDivergenceError("initial state already beyond the divergence bound")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 == t0:
        raise ValueError("integration span must have nonzero length")
    if on_escape not in ("raise", "truncate"):
        raise ValueError("on_escape must be 'raise' or 'truncate'")

    def rhs(t, y):
        return np.asarray(spec.field(y), dtype=float)

    sol = solve_ivp(
        rhs,
        (t0, t1),
        x0,
        method="DOP853",
        dense_output=True,
        rtol=tol,
        atol=tol / 100.0,
        events=[_escape_event(norm_bound)],
    )
    if sol.status == -1:
        raise RuntimeError(f"integration failed: {sol.message}")
    escaped = sol.status == 1
    if escaped and on_escape == "raise":
        raise FlowDivergenceError(
            f"{spec.name}: orbit from {x0} crossed norm {norm_bound:.3g} "
            f"at t={sol.t[-1]:.6g}"
        )
    return Trajectory(spec, x0, t0, sol.t[-1], sol.sol, tol, escaped, requested_t1=t1)


def flow_at(
    spec: VectorFieldSpec,
    x,
    t: float,
    tol: float = DEFAULT_TOL,
    norm_bound: float = DEFAULT_NORM_BOUND,
) -> np.ndarray:
    """The point ``X_t(x)``; ``t`` may be negative, ``t=0`` is exact."""
    x = np.asarray(x, dtype=float)
    t = float(t)
    if t == 0.0:
        return x.copy()
    return integrate(spec, x, (0.0, t), tol=tol, norm_bound=norm_bound).at(t)


def tangent_flow(
    spec: VectorFieldSpec,
    x,
    t: float,
    tol: float = DEFAULT_TOL,
    norm_bound: float = DEFAULT_NORM_BOUND,
):
    """Solve the variational equation along the orbit of ``x``.

    Returns
    -------
    (x_t, M) : tuple of ndarray
        The endpoint ``X_t(x)`` and the derivative ``D X_t(x)`` of shape
        ``(dim, dim)``, obtained by integrating ``V' = J(x(t)) V`` from the
        identity alongside the base orbit.
    """
    x = np.asarray(x, dtype=float)
    n = spec.dim
    if x.shape != (n,):
        raise ValueError(f"x has shape {x.shape}, expected ({n},)")
    t = float(t)
    if t == 0.0:
        return x.copy(), np.eye(n)

    def rhs(s, y):
        base = y[:n]
        v = y[n:].reshape(n, n)
        return np.concatenate(
            [np.asarray(spec.field(base), dtype=float), (spec.jacobian_at(base) @ v).ravel()]
        )

    def ev(s, y):
        return norm_bound - float(np.linalg.norm(y[:n]))

    ev.terminal = True
    ev.direction = -1

    y0 = np.concatenate([x, np.eye(n).ravel()])
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=tol, atol=tol / 100.0, events=[ev])
    if sol.status == -1:
        raise RuntimeError(f"variational integration failed: {sol.message}")
    if sol.status == 1:
        raise FlowDivergenceError(
            f"{spec.name}: orbit from {x} crossed norm {norm_bound:.3g} during tangent flow"
        )
    y_end = sol.y[:, -1]
    return y_end[:n].copy(), y_end[n:].reshape(n, n).copy()


def validate_jacobian(
    spec: VectorFieldSpec,
    points: Sequence,
    step: float = 1e-6,
) -> float:
    """Largest row-scaled mismatch between ``jacobian`` and a central
    finite difference of ``field`` over the given points.

    The mismatch at entry ``(i, j)`` is scaled by ``1 + |row_i(J)|`` so the
    check is meaningful for both small and large derivative rows.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        jac = spec.jacobian_at(x)
        fd = np.empty_like(jac)
        for j in range(spec.dim):
            e = np.zeros(spec.dim)
            e[j] = step
            fd[:, j] = (spec.field_at(x + e) - spec.field_at(x - e)) / (2.0 * step)
        scale = 1.0 + np.linalg.norm(jac, axis=1)
        worst = max(worst, float(np.max(np.abs(fd - jac) / scale[:, None])))
    return worst
