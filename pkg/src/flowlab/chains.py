"""Pseudo-orbits: construction, verification, evaluation, serialization.

A pseudo-orbit is a finite list of (point, duration) pairs where each
duration is at least 1 and consecutive flow images land within ``delta`` of
the next point.  Optional constant head and tail entries extend a chain to
bi-infinite index ranges; their single stored point must itself recur within
``delta`` under its duration (an equilibrium or a near-periodic point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .flow import (
    DEFAULT_TOL,
    VectorFieldSpec,
    distance,
    flow_at,
    integrate,
    wrap_point,
)

__all__ = [
    "PseudoOrbit",
    "ChainCheck",
    "accumulated_time",
    "verify_chain",
    "ConcatEvaluator",
    "eval_concat",
    "generate_noisy",
    "equilibrium_segment_chain",
    "periodic_family_chain",
    "save_chain",
    "load_chain",
]


@dataclass(frozen=True)
class PseudoOrbit:
    """A delta-chain for ``spec``: body points, durations, optional ends.

    Parameters
    ----------
    spec : VectorFieldSpec
        The field the chain lives on.
    points : ndarray, shape (m, dim)
        Body points ``x_0 .. x_{m-1}``.
    durations : ndarray, shape (m,)
        Flight times ``t_i >= 1`` attached to each body point.
    delta : float
        Allowed jump size at each transition.
    head, tail : (point, duration) or None
        Constant extensions used for indices ``i < 0`` and ``i >= m``.
    """

    spec: VectorFieldSpec
    points: np.ndarray
    durations: np.ndarray
    delta: float
    head: Optional[tuple] = None
    tail: Optional[tuple] = None

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        dur = np.atleast_1d(np.asarray(self.durations, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != self.spec.dim:
            raise ValueError(f"points must have shape (m, {self.spec.dim})")
        if dur.shape != (pts.shape[0],):
            raise ValueError("durations must match the number of points")
        if pts.shape[0] < 1:
            raise ValueError("a chain needs at least one point")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(dur))):
            raise ValueError("points and durations must be finite")
        if np.any(dur < 1.0 - 1e-12):
            raise ValueError(f"every duration must be >= 1 (got min {dur.min():.6g})")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError("delta must be positive")
        head = self._frozen_end(self.head, "head")
        tail = self._frozen_end(self.tail, "tail")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "durations", dur)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail", tail)
        cum = np.concatenate([[0.0], np.cumsum(dur)])
        object.__setattr__(self, "_cum", cum)

    def _frozen_end(self, end, label):
        if end is None:
            return None
        point, t = end
        point = np.asarray(point, dtype=float)
        t = float(t)
        if point.shape != (self.spec.dim,):
            raise ValueError(f"{label} point must have shape ({self.spec.dim},)")
        if not np.all(np.isfinite(point)):
            raise ValueError(f"{label} point must be finite")
        if t < 1.0 - 1e-12:
            raise ValueError(f"{label} duration must be >= 1 (got {t:.6g})")
        return (point, t)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def boundary_times(self) -> np.ndarray:
        """Accumulated times ``S_0 = 0, S_1, ..., S_m`` of the body."""
        return self._cum.copy()

    @property
    def total_time(self) -> float:
        return float(self._cum[-1])


def accumulated_time(po: PseudoOrbit, i: int) -> float:
    """The time ``S_i`` at which index ``i`` begins.

    ``S_0 = 0``; body indices accumulate forward; negative indices walk
    backward through head repeats, indices beyond the body through tail
    repeats.  Indices outside the covered range raise ``IndexError``.
    """
    i = int(i)
    m = po.size
    if 0 <= i <= m:
        return float(po._cum[i])
    if i < 0:
        if po.head is None:
            raise IndexError(f"index {i} needs a head extension")
        return float(i) * po.head[1]
    if po.tail is None:
        raise IndexError(f"index {i} needs a tail extension")
    return float(po._cum[-1]) + float(i - m) * po.tail[1]


@dataclass(frozen=True)
class ChainCheck:
    """Result of :func:`verify_chain`: per-transition gaps and a verdict."""

    ok: bool
    delta: float
    max_gap: float
    gaps: tuple  # of (label, value)


def verify_chain(po: PseudoOrbit, tol: float = DEFAULT_TOL) -> ChainCheck:
    """Measure every transition gap ``d(X_{t_i}(x_i), x_{i+1})``.

    Head and tail extensions contribute their self-gap (the stored point
    against its own flow image) and the gap into or out of the body.
    """
    gaps = []
    spec = po.spec
    if po.head is not None:
        hp, ht = po.head
        img = flow_at(spec, hp, ht, tol=tol)
        gaps.append(("head->head", distance(spec, img, hp)))
        gaps.append(("head->0", distance(spec, img, po.points[0])))
    images = [
        flow_at(spec, po.points[i], po.durations[i], tol=tol) for i in range(po.size)
    ]
    for i in range(po.size - 1):
        gaps.append((f"{i}->{i + 1}", distance(spec, images[i], po.points[i + 1])))
    if po.tail is not None:
        tp, tt = po.tail
        gaps.append((f"{po.size - 1}->tail", distance(spec, images[-1], tp)))
        img = flow_at(spec, tp, tt, tol=tol)
        gaps.append(("tail->tail", distance(spec, img, tp)))
    values = [g for _, g in gaps]
    max_gap = max(values) if values else 0.0
    return ChainCheck(ok=max_gap < po.delta, delta=po.delta, max_gap=max_gap, gaps=tuple(gaps))


class ConcatEvaluator:
    """Evaluate the concatenated trajectory of a chain at arbitrary times.

    On ``[S_i, S_{i+1}]`` the value is ``X_{t - S_i}(x_i)``; head and tail
    times reuse a single cached trajectory of the constant entry.  Per-segment
    trajectories are integrated lazily and cached, so repeated evaluation is
    an interpolant lookup.
    """

    def __init__(self, po: PseudoOrbit, tol: float = DEFAULT_TOL, norm_bound: float = 1e6):
        self.po = po
        self.tol = tol
        self.norm_bound = norm_bound
        self._segments = {}

    def _segment(self, key, point, duration):
        traj = self._segments.get(key)
        if traj is None:
            traj = integrate(
                self.po.spec, point, (0.0, duration), tol=self.tol, norm_bound=self.norm_bound
            )
            self._segments[key] = traj
        return traj

    def _locate(self, t: float):
        po = self.po
        cum = po._cum
        total = cum[-1]
        if t < 0.0:
            if po.head is None:
                raise ValueError(f"t={t:.6g} precedes the chain and there is no head")
            hp, ht = po.head
            k = math.floor(t / ht)
            return ("head", hp, ht, t - k * ht)
        if t < total:
            i = int(np.searchsorted(cum, t, side="right")) - 1
            return (i, po.points[i], po.durations[i], t - cum[i])
        if po.tail is not None:
            tp, tt = po.tail
            local = t - total
            k = math.floor(local / tt)
            return ("tail", tp, tt, local - k * tt)
        if t <= total + 1e-9 * max(1.0, total):
            i = po.size - 1
            return (i, po.points[i], po.durations[i], t - cum[i])
        raise ValueError(f"t={t:.6g} is past the chain and there is no tail")

    def at(self, t: float) -> np.ndarray:
        key, point, duration, local = self._locate(float(t))
        return self._segment(key, point, duration).at(local)

    def at_many(self, ts) -> np.ndarray:
        return np.array([self.at(float(t)) for t in np.asarray(ts, dtype=float)])


def eval_concat(po: PseudoOrbit, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """One-off evaluation of the concatenated trajectory at time ``t``."""
    return ConcatEvaluator(po, tol=tol).at(t)


def generate_noisy(
    spec: VectorFieldSpec,
    x0,
    count: int,
    noise: float,
    step: float = 1.0,
    rng=None,
    noise_subspace=None,
    tol: float = DEFAULT_TOL,
    norm_bound: float = 1e6,
) -> PseudoOrbit:
    """Flow-and-perturb chain: ``x_{i+1} = X_step(x_i) + xi_i``, ``|xi| <= noise``.

    ``count`` is the number of transitions, so the chain has ``count + 1``
    points.  Perturbations are drawn uniformly from the ball of radius
    ``noise``, restricted to the column span of ``noise_subspace`` when one
    is given (columns are orthonormalized first).  The chain's ``delta`` is
    ``noise + 10 * tol`` to absorb integration error in later verification.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if noise <= 0:
        raise ValueError("noise must be positive")
    if step < 1.0 - 1e-12:
        raise ValueError("step must be >= 1")
    rng = np.random.default_rng(rng)
    basis = None
    if noise_subspace is not None:
        basis = np.linalg.qr(np.asarray(noise_subspace, dtype=float))[0]
        if basis.shape[0] != spec.dim or basis.shape[1] < 1:
            raise ValueError(f"noise_subspace must be ({spec.dim}, k) with k >= 1")
    k = spec.dim if basis is None else basis.shape[1]
    pts = np.empty((count + 1, spec.dim))
    pts[0] = wrap_point(spec, np.asarray(x0, dtype=float))
    for i in range(count):
        base = flow_at(spec, pts[i], step, tol=tol, norm_bound=norm_bound)
        g = rng.standard_normal(k)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            xi_local = np.zeros(k)
        else:
            xi_local = g / norm * noise * rng.random() ** (1.0 / k)
        xi = xi_local if basis is None else basis @ xi_local
        pts[i + 1] = wrap_point(spec, base + xi)
    return PseudoOrbit(
        spec=spec,
        points=pts,
        durations=np.full(count + 1, float(step)),
        delta=noise + 10.0 * tol,
    )


def equilibrium_segment_chain(
    spec: VectorFieldSpec, epsilon: float, delta: float
) -> PseudoOrbit:
    """Unit-time chain walking along equilibria on the first axis.

    Points ``(alpha_i, 0, ...)`` run from 0 to ``epsilon/2`` in uniform steps
    of at most ``0.8 * delta``; head and tail sit at the endpoints forever.
    Every point is required to be an equilibrium of ``spec`` (the transition
    gaps then equal the spatial steps exactly).
    """
    epsilon = float(epsilon)
    delta = float(delta)
    if epsilon <= 0 or delta <= 0:
        raise ValueError("epsilon and delta must be positive")
    span = epsilon / 2.0
    n_seg = max(1, math.ceil(span / (0.8 * delta) - 1e-12))
    alphas = np.linspace(0.0, span, n_seg + 1)
    pts = np.zeros((n_seg + 1, spec.dim))
    pts[:, 0] = alphas
    for p in pts:
        residual = float(np.linalg.norm(spec.field_at(p)))
        if residual > 1e-10:
            raise ValueError(
                f"point {p} on the segment is not an equilibrium "
                f"(|field| = {residual:.3g}); the chain construction needs one"
            )
    return PseudoOrbit(
        spec=spec,
        points=pts,
        durations=np.ones(n_seg + 1),
        delta=delta,
        head=(pts[0].copy(), 1.0),
        tail=(pts[-1].copy(), 1.0),
    )


def periodic_family_chain(
    spec: VectorFieldSpec,
    p,
    v,
    n_points: int,
    period_hint: float,
    delta: Optional[float] = None,
    tol: float = 1e-10,
) -> PseudoOrbit:
    """Chain drifting across a family of periodic orbits along a neutral
    normal direction.

    ``p`` must lie on a periodic orbit (period near ``period_hint``) and
    ``v`` must be a normal vector on which the period-return derivative acts
    as an isometry (multiplier of modulus 1 within 1e-3).  The chain points
    are ``exp_p((i/N) C^i v)`` in the normal disc at ``p``, each flown for
    its own first-return time, so the transition gaps are ``|v|/N`` up to
    curvature of the return map.  Head is ``p`` itself; tail is the full
    displacement ``exp_p(C^N v)``.
    """
    from .poincare import linear_poincare, normal_frame, section_map

    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)

    crossing = section_map(spec, p, p, period_hint, tol=tol)
    period = crossing.tau
    closure = distance(spec, crossing.point, wrap_point(spec, p))
    if closure > 1e-8:
        raise ValueError(
            f"p does not return to itself (gap {closure:.3g} after t={period:.6g})"
        )

    frame = normal_frame(spec, p)
    ret = linear_poincare(spec, p, period, tol=tol)
    v_frame = frame.T @ v
    if np.linalg.norm(v - frame @ v_frame) > 1e-8 * max(1.0, np.linalg.norm(v)):
        raise ValueError("v must lie in the normal space at p")
    speed = np.linalg.norm(v_frame)
    if speed == 0.0:
        raise ValueError("v must be nonzero")
    stretch = np.linalg.norm(ret @ v_frame) / speed
    if abs(stretch - 1.0) > 1e-3:
        raise ValueError(
            f"the return derivative scales v by {stretch:.6g}; the construction "
            "needs a modulus-one direction"
        )

    m = int(n_points)
    pts = np.empty((m, spec.dim))
    durations = np.empty(m)
    u = v_frame.copy()
    for i in range(m):
        pts[i] = wrap_point(spec, p + frame @ ((i / m) * u))
        durations[i] = section_map(spec, p, pts[i], period, tol=tol).tau
        u = ret @ u
        u *= speed / np.linalg.norm(u)
    tail_point = wrap_point(spec, p + frame @ u)
    tail_tau = section_map(spec, p, tail_point, period, tol=tol).tau
    if delta is None:
        delta = 1.5 * speed / m
    return PseudoOrbit(
        spec=spec,
        points=pts,
        durations=durations,
        delta=float(delta),
        head=(wrap_point(spec, p), period),
        tail=(tail_point, tail_tau),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def save_chain(po: PseudoOrbit, path) -> None:
    """Write a chain as text: header ``dim delta has_head has_tail``, then
    one ``index duration coords...`` row per entry (head at index -1, tail
    at index m).  Floats are written with full round-trip precision, so a
    load followed by a save is byte-identical.
    """
    lines = [
        f"{po.spec.dim} {_fmt(po.delta)} {int(po.head is not None)} {int(po.tail is not None)}"
    ]
    if po.head is not None:
        hp, ht = po.head
        lines.append(" ".join(["-1", _fmt(ht)] + [_fmt(c) for c in hp]))
    for i in range(po.size):
        lines.append(
            " ".join([str(i), _fmt(po.durations[i])] + [_fmt(c) for c in po.points[i]])
        )
    if po.tail is not None:
        tp, tt = po.tail
        lines.append(" ".join([str(po.size), _fmt(tt)] + [_fmt(c) for c in tp]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_chain(spec: VectorFieldSpec, path) -> PseudoOrbit:
    """Read a chain written by :func:`save_chain` for the given field."""
    with open(path) as fh:
        rows = [line.split() for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty chain file")
    header = rows[0]
    if len(header) != 4:
        raise ValueError(f"{path}: header must be 'dim delta has_head has_tail'")
    dim = int(header[0])
    if dim != spec.dim:
        raise ValueError(f"{path}: chain dimension {dim} does not match spec {spec.dim}")
    delta = float(header[1])
    has_head, has_tail = int(header[2]), int(header[3])
    body_rows = rows[1:]
    expected = len(body_rows) - has_head - has_tail
    if expected < 1:
        raise ValueError(f"{path}: no body rows")

    def parse(row, want_index):
        if len(row) != 2 + dim:
            raise ValueError(f"{path}: row has {len(row)} fields, expected {2 + dim}")
        if int(row[0]) != want_index:
            raise ValueError(f"{path}: row index {row[0]}, expected {want_index}")
        return float(row[1]), np.array([float(c) for c in row[2:]])

    head = tail = None
    at = 0
    if has_head:
        t, pt = parse(body_rows[at], -1)
        head = (pt, t)
        at += 1
    pts = np.empty((expected, dim))
    durs = np.empty(expected)
    for i in range(expected):
        durs[i], pts[i] = parse(body_rows[at], i)
        at += 1
    if has_tail:
        t, pt = parse(body_rows[at], expected)
        tail = (pt, t)
    return PseudoOrbit(
        spec=spec, points=pts, durations=durs, delta=delta, head=head, tail=tail
    )
