"""Normal frames, section maps, return cocycles, and orbit classification.

The normal bundle along an orbit is spanned by deterministic orthonormal
frames; the flow derivative compressed to those frames (orthogonal
projection along the way) gives the linear return cocycle used by all
splitting diagnostics.  Long-time products are always composed from short
steps, never inverted across long spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .flow import (
    DEFAULT_TOL,
    VectorFieldSpec,
    coord_difference,
    distance,
    flow_at,
    integrate,
    tangent_flow,
    wrap_point,
)

__all__ = [
    "SectionError",
    "NoCrossingError",
    "TangentialCrossingError",
    "NewtonSingularError",
    "NewtonDivergedError",
    "ConsistencyError",
    "SectionCrossing",
    "PeriodicPoint",
    "CriticalElementReport",
    "normal_frame",
    "linear_poincare",
    "NormalCocycle",
    "build_cocycle",
    "section_map",
    "find_periodic_newton",
    "classify_singularity",
    "classify_periodic",
]


class SectionError(RuntimeError):
    """Base class for section-crossing failures."""


class NoCrossingError(SectionError):
    """The orbit never crossed the target section in the search window."""


class TangentialCrossingError(SectionError):
    """The orbit met the section almost tangentially; the crossing is unreliable."""


class NewtonSingularError(RuntimeError):
    """The return derivative has a multiplier too close to 1 for Newton."""


class NewtonDivergedError(RuntimeError):
    """The Newton iteration left the section disc or ran out of iterations."""


class ConsistencyError(RuntimeError):
    """An internal invariant check failed (e.g. flow-direction transport)."""


@dataclass(frozen=True)
class SectionCrossing:
    point: np.ndarray
    tau: float
    in_window: bool


@dataclass(frozen=True)
class PeriodicPoint:
    point: np.ndarray
    period: float
    residual: float
    iterations: int


@dataclass(frozen=True)
class CriticalElementReport:
    """Spectrum and hyperbolicity data of a singularity or periodic orbit.

    ``spectrum`` holds eigenvalues of the linearization (singularity) or
    normal multipliers (periodic orbit).  ``index`` counts the stable part
    of the spectrum; ``index_with_flow`` adds 1 for a periodic orbit to
    count the flow direction inside the stable set, and equals ``index``
    for a singularity.
    """

    kind: str
    point: np.ndarray
    period: Optional[float]
    spectrum: tuple
    margins: tuple
    hyperbolic: bool
    index: int
    index_with_flow: int


def normal_frame(spec: VectorFieldSpec, x, min_speed: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the field at ``x``.

    Columns are obtained by Gram-Schmidt from the identity basis with the
    coordinate axis most aligned with the field dropped, so the result is a
    deterministic function of the field direction.  Raises ``ValueError``
    at (numerical) singularities.
    """
    x = np.asarray(x, dtype=float)
    v = spec.field_at(x)
    speed = np.linalg.norm(v)
    if speed < min_speed:
        raise ValueError(f"no normal frame at a singularity (|field| = {speed:.3g})")
    v = v / speed
    n = spec.dim
    drop = int(np.argmax(np.abs(v)))
    cols = []
    for j in range(n):
        if j == drop:
            continue
        w = np.zeros(n)
        w[j] = 1.0
        w -= (w @ v) * v
        for c in cols:
            w -= (w @ c) * c
        norm = np.linalg.norm(w)
        if norm < 1e-10:
            raise ConsistencyError("Gram-Schmidt degenerated while building a frame")
        cols.append(w / norm)
    return np.column_stack(cols)


def linear_poincare(
    spec: VectorFieldSpec, x, t: float, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """The flow derivative compressed to normal frames: ``F(X_t x)^T DX_t F(x)``.

    Equals the derivative of the section-to-section map between the normal
    discs at ``x`` and ``X_t(x)`` composed with orthogonal projection.  The
    flow-direction transport ``DX_t X(x) = X(X_t x)`` is verified to 1e-5
    relative accuracy as a guard against integration drift.
    """
    x = np.asarray(x, dtype=float)
    x_end, deriv = tangent_flow(spec, x, t, tol=tol)
    v0 = spec.field_at(x)
    v1 = spec.field_at(x_end)
    drift = np.linalg.norm(deriv @ v0 - v1) / (1.0 + np.linalg.norm(v1))
    if drift > 1e-5:
        raise ConsistencyError(
            f"flow-direction transport off by {drift:.3g} over t={t:.6g}; "
            "tighten tol or shorten the span"
        )
    f0 = normal_frame(spec, x)
    f1 = normal_frame(spec, x_end)
    return f1.T @ deriv @ f0


class NormalCocycle:
    """Per-step normal transition matrices along one orbit.

    Sample times are ``s_k = t_start + k * dt``; ``trans[k]`` maps frame
    coordinates at ``s_k`` to frame coordinates at ``s_{k+1}``.  Window
    products are composed step by step.
    """

    def __init__(self, spec, times, points, frames, trans, tol):
        self.spec = spec
        self.times = times
        self.points = points
        self.frames = frames
        self.trans = trans
        self.tol = tol

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def steps(self) -> int:
        return self.trans.shape[0]

    def index_of_time(self, t: float) -> int:
        k = int(round((float(t) - self.times[0]) / self.dt))
        if not 0 <= k <= self.steps:
            raise IndexError(f"t={t:.6g} outside the sampled span")
        if abs(self.times[k] - t) > self.dt / 2 + 1e-9:
            raise IndexError(f"t={t:.6g} does not snap to the sample grid")
        return k

    def window_product(self, i: int, j: int) -> np.ndarray:
        """Product ``trans[j-1] @ ... @ trans[i]`` (requires ``i <= j``)."""
        if not 0 <= i <= j <= self.steps:
            raise IndexError(f"window ({i}, {j}) outside [0, {self.steps}]")
        out = np.eye(self.trans.shape[1])
        for k in range(i, j):
            out = self.trans[k] @ out
        return out


def build_cocycle(
    spec: VectorFieldSpec,
    x,
    t_total: float,
    dt: float,
    t_start: float = 0.0,
    tol: float = DEFAULT_TOL,
) -> NormalCocycle:
    """Sample the normal cocycle along the orbit of ``x`` on a uniform grid.

    The orbit segment covers ``[t_start, t_start + t_total]`` (``t_start``
    may be negative to pad backward).  Each step's derivative is integrated
    separately and compressed between consecutive frames; the flow-direction
    transport is checked at every step.
    """
    if dt <= 0 or t_total <= 0:
        raise ValueError("dt and t_total must be positive")
    m = int(round(t_total / dt))
    if m < 2:
        raise ValueError("the sampled span must contain at least two steps")
    dt = t_total / m
    x = np.asarray(x, dtype=float)
    start = flow_at(spec, x, t_start, tol=tol) if t_start != 0.0 else x.copy()

    n = spec.dim
    times = t_start + dt * np.arange(m + 1)
    points = np.empty((m + 1, n))
    frames = np.empty((m + 1, n, n - 1))
    trans = np.empty((m, n - 1, n - 1))
    points[0] = start
    frames[0] = normal_frame(spec, start)
    for k in range(m):
        x_next, deriv = tangent_flow(spec, points[k], dt, tol=tol)
        v0 = spec.field_at(points[k])
        v1 = spec.field_at(x_next)
        drift = np.linalg.norm(deriv @ v0 - v1) / (1.0 + np.linalg.norm(v1))
        if drift > 1e-5:
            raise ConsistencyError(
                f"flow-direction transport off by {drift:.3g} at step {k}"
            )
        points[k + 1] = x_next
        frames[k + 1] = normal_frame(spec, x_next)
        trans[k] = frames[k + 1].T @ deriv @ frames[k]
    return NormalCocycle(spec, times, points, frames, trans, tol)


def _cross_plane(
    spec: VectorFieldSpec,
    anchor: np.ndarray,
    normal: np.ndarray,
    y: np.ndarray,
    t_max: float,
    t_skip: float,
    tol: float,
    scan_points: int = 600,
):
    """First directional crossing of the plane through ``anchor`` after ``t_skip``.

    Scans a dense trajectory of ``y`` on a uniform grid, then refines the
    bracketing interval with Brent's method.  Only crossings in the field
    direction (g increasing through 0) count.
    """
    traj = integrate(spec, y, (0.0, t_max), tol=tol)

    def g(t):
        return float(normal @ (traj.at(t) - anchor))

    grid = np.linspace(t_skip, t_max, scan_points)
    vals = (traj.at_many(grid) - anchor) @ normal
    for k in range(1, len(grid)):
        if vals[k - 1] < 0.0 <= vals[k]:
            if vals[k] == 0.0 and vals[k - 1] >= 0.0:
                continue
            tau = brentq(g, grid[k - 1], grid[k], xtol=1e-12, rtol=8.9e-16)
            point = traj.at(tau)
            speed = spec.field_at(point)
            rate = abs(float(speed @ normal))
            if rate < 1e-6 * (1.0 + np.linalg.norm(speed)):
                raise TangentialCrossingError(
                    f"crossing at t={tau:.6g} is tangential (rate {rate:.3g})"
                )
            return point, float(tau)
    raise NoCrossingError(
        f"no forward crossing of the section in [{t_skip:.6g}, {t_max:.6g}]"
    )


def section_map(
    spec: VectorFieldSpec,
    x,
    y,
    t: float,
    tol: float = DEFAULT_TOL,
    radius: Optional[float] = None,
) -> SectionCrossing:
    """Flow ``y`` to its first crossing of the normal section at ``X_t(x)``.

    The target section is the hyperplane through ``X_t(x)`` orthogonal to
    the field there.  Crossings during ``[0, t/3]`` are ignored (the start
    point typically sits on or near a parallel section); the search window
    ends at ``2t``.  ``in_window`` flags whether the crossing time lies in
    ``(2t/3, 4t/3)``.  The crossing point is returned with angle
    coordinates wrapped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = float(t)
    if t <= 0:
        raise ValueError("t must be positive")
    anchor = flow_at(spec, x, t, tol=tol)
    speed = spec.field_at(anchor)
    norm = np.linalg.norm(speed)
    if norm < 1e-12:
        raise ValueError("the target point is a singularity; no section there")
    normal = speed / norm
    point, tau = _cross_plane(spec, anchor, normal, y, 2.0 * t, t / 3.0, tol)
    if radius is not None and distance(spec, point, anchor) > radius:
        raise NoCrossingError(
            f"crossing at t={tau:.6g} lands outside the section disc of radius {radius}"
        )
    in_window = 2.0 * t / 3.0 < tau < 4.0 * t / 3.0
    return SectionCrossing(point=wrap_point(spec, point), tau=tau, in_window=in_window)


def find_periodic_newton(
    spec: VectorFieldSpec,
    x_guess,
    t_guess: float,
    tol: float = DEFAULT_TOL,
    residual_tol: float = 1e-9,
    max_iter: int = 30,
) -> PeriodicPoint:
    """Newton iteration for a periodic point on the section through the guess.

    Works on the fixed normal disc at ``x_guess``: each iteration flows the
    current point to its first return, forms the return-map derivative (the
    monodromy projected along the flow direction onto the disc), and solves
    one Newton step.  A return derivative with a multiplier within 1e-6 of
    1 aborts with :class:`NewtonSingularError` before any step is taken, so
    non-isolated periodic orbits are rejected rather than silently drifted
    along.
    """
    base = np.asarray(x_guess, dtype=float)
    speed = spec.field_at(base)
    norm = np.linalg.norm(speed)
    if norm < 1e-12:
        raise ValueError("the guess is a singularity, not a periodic point")
    normal = speed / norm
    frame = normal_frame(spec, base)
    leash = 10.0 * max(1.0, float(np.linalg.norm(base)))

    q = np.zeros(spec.dim - 1)
    t_cur = float(t_guess)
    for it in range(1, max_iter + 1):
        y = base + frame @ q
        point, tau = _cross_plane(spec, base, normal, y, 2.0 * t_cur, t_cur / 3.0, tol)
        residual = distance(spec, point, y)

        _, deriv = tangent_flow(spec, y, tau, tol=tol)
        v_end = spec.field_at(point)
        denom = float(v_end @ normal)
        proj = np.eye(spec.dim) - np.outer(v_end, normal) / denom
        ret = frame.T @ proj @ deriv @ frame

        sing = np.linalg.svd(ret - np.eye(spec.dim - 1), compute_uv=False)[-1]
        if sing < 1e-6 * max(1.0, float(np.linalg.norm(ret, 2))):
            raise NewtonSingularError(
                f"return derivative has a unit multiplier (sigma_min = {sing:.3g}); "
                "the periodic orbit is not isolated on the section"
            )
        if residual <= residual_tol:
            return PeriodicPoint(
                point=wrap_point(spec, y), period=tau, residual=residual, iterations=it
            )
        gap = frame.T @ coord_difference(spec, point, y)
        q = q + np.linalg.solve(ret - np.eye(spec.dim - 1), -gap)
        t_cur = tau
        if np.linalg.norm(q) > leash:
            raise NewtonDivergedError("iterate left the section disc")
    raise NewtonDivergedError(f"no convergence in {max_iter} iterations")


def _polish_singularity(spec: VectorFieldSpec, x: np.ndarray, max_iter: int = 30):
    # Least-squares Newton tolerates rank-deficient Jacobians, so whole
    # curves of equilibria are handled: the step moves orthogonally to them.
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        v = spec.field_at(x)
        if np.linalg.norm(v) < 1e-13:
            break
        step = np.linalg.lstsq(spec.jacobian_at(x), v, rcond=None)[0]
        x = x - step
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(x)):
            break
    return x


def classify_singularity(spec: VectorFieldSpec, x, tol: float = DEFAULT_TOL) -> CriticalElementReport:
    """Polish ``x`` to a nearby equilibrium and report its linearization.

    Hyperbolicity requires every eigenvalue's real part to clear 1e-6 in
    absolute value; ``margins`` lists those absolute real parts, sorted
    together with the spectrum by real part then imaginary part.
    """
    x = _polish_singularity(spec, np.asarray(x, dtype=float))
    residual = float(np.linalg.norm(spec.field_at(x)))
    if residual > 1e-8:
        raise ValueError(f"no equilibrium near the given point (|field| = {residual:.3g})")
    eig = np.linalg.eigvals(spec.jacobian_at(x))
    order = np.lexsort((eig.imag, eig.real))
    eig = eig[order]
    margins = np.abs(eig.real)
    index = int(np.sum(eig.real < 0.0))
    return CriticalElementReport(
        kind="singularity",
        point=wrap_point(spec, x),
        period=None,
        spectrum=tuple(complex(z) for z in eig),
        margins=tuple(float(m) for m in margins),
        hyperbolic=bool(margins.min() > 1e-6),
        index=index,
        index_with_flow=index,
    )


def classify_periodic(
    spec: VectorFieldSpec, p, period: float, tol: float = DEFAULT_TOL
) -> CriticalElementReport:
    """Report the normal multipliers of a periodic point known to precision.

    ``p`` must return to itself after ``period`` within 1e-8; use
    :func:`find_periodic_newton` first if it does not.  Margins are the
    distances of the multiplier moduli from 1; hyperbolicity requires all
    of them above 1e-6.  ``index`` counts multipliers inside the unit
    circle; ``index_with_flow`` adds the flow direction.
    """
    p = np.asarray(p, dtype=float)
    period = float(period)
    closure = distance(spec, flow_at(spec, p, period, tol=tol), p)
    if closure > 1e-8 * max(1.0, float(np.linalg.norm(p))):
        raise ValueError(
            f"point is not {period:.6g}-periodic (closure gap {closure:.3g})"
        )
    ret = linear_poincare(spec, p, period, tol=tol)
    mult = np.linalg.eigvals(ret)
    order = np.lexsort((np.angle(mult), np.abs(mult)))
    mult = mult[order]
    margins = np.abs(np.abs(mult) - 1.0)
    index = int(np.sum(np.abs(mult) < 1.0))
    return CriticalElementReport(
        kind="periodic",
        point=wrap_point(spec, p),
        period=period,
        spectrum=tuple(complex(z) for z in mult),
        margins=tuple(float(m) for m in margins),
        hyperbolic=bool(margins.min() > 1e-6),
        index=index,
        index_with_flow=index + 1,
    )
