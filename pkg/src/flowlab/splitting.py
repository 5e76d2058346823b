"""Dominated splittings, hyperbolicity fits, and quasi-hyperbolic arcs.

All diagnostics run over a sampled :class:`~flowlab.poincare.NormalCocycle`.
Stable bundles are recovered from backward window products, unstable ones
from forward products; long products are composed from the per-step
transitions (inverting only single steps), which keeps conditioning under
control even along strongly hyperbolic orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .flow import DEFAULT_TOL, VectorFieldSpec, distance, integrate
from .poincare import CriticalElementReport, NormalCocycle, build_cocycle, find_periodic_newton

__all__ = [
    "DominationGapError",
    "SplittingDegenerateError",
    "SplittingEstimate",
    "estimate_splitting",
    "DominationCheck",
    "check_domination",
    "HyperbolicFit",
    "fit_hyperbolic",
    "QuasiHyperbolicCertificate",
    "check_quasi_hyperbolic",
    "UniformEstimates",
    "uniform_periodic_estimates",
    "PeriodicShadow",
    "arc_to_periodic_orbit",
]


class DominationGapError(RuntimeError):
    """Window products show no usable singular-value gap at the requested rank."""


class SplittingDegenerateError(RuntimeError):
    """Estimated stable and unstable bundles are nearly tangent somewhere."""


def _orth(cols: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(cols)
    return q


class SplittingEstimate:
    """Sampled stable/unstable normal bundles along one orbit.

    ``basis_at(k)`` returns orthonormal bases ``(Bs, Bu)`` of the candidate
    stable (dimension ``p``) and unstable bundles at sample ``k``; valid
    samples are ``k_lo <= k <= k_hi`` (one finite-time window away from each
    end of the cocycle).
    """

    def __init__(self, cocycle, p, window_steps, stable, unstable, gap_ratio_min, residual):
        self.cocycle = cocycle
        self.p = p
        self.window_steps = window_steps
        self.stable = stable
        self.unstable = unstable
        self.gap_ratio_min = gap_ratio_min
        self.residual = residual

    @property
    def k_lo(self) -> int:
        return self.window_steps

    @property
    def k_hi(self) -> int:
        return self.cocycle.steps - self.window_steps

    def basis_at(self, k: int):
        if not self.k_lo <= k <= self.k_hi:
            raise IndexError(f"sample {k} outside the valid range [{self.k_lo}, {self.k_hi}]")
        return self.stable[k], self.unstable[k]


def estimate_splitting(
    cocycle: NormalCocycle, p: int, window_time: float = 3.0
) -> SplittingEstimate:
    """Estimate a rank-``p`` stable / rank-``(n-1-p)`` unstable splitting.

    The unstable bundle at the end of the leading window is the span of the
    dominant left singular vectors of that window's product, then pushed
    forward; the stable bundle comes symmetrically from the trailing window
    pulled backward one step at a time.  A singular-value ratio below 1.2
    between ranks ``q`` and ``q+1`` raises :class:`DominationGapError`;
    nearly tangent bundles raise :class:`SplittingDegenerateError`.
    """
    n1 = cocycle.trans.shape[1]
    if not 1 <= p <= n1 - 1:
        raise ValueError(f"p must be between 1 and {n1 - 1}")
    q = n1 - p
    dt = cocycle.dt
    window = max(1, int(round(window_time / dt)))
    m = cocycle.steps
    if m < 2 * window + 2:
        raise ValueError(
            f"cocycle has {m} steps; need more than {2 * window + 2} for window {window_time}"
        )

    stable = np.full((m + 1, n1, p), np.nan)
    unstable = np.full((m + 1, n1, q), np.nan)

    w = cocycle.window_product(0, window)
    unstable[window] = np.linalg.svd(w)[0][:, :q]
    for k in range(window + 1, m + 1):
        unstable[k] = _orth(cocycle.trans[k - 1] @ unstable[k - 1])

    w = cocycle.window_product(m - window, m)
    stable[m - window] = np.linalg.svd(w)[2].T[:, n1 - p :]
    for k in range(m - window - 1, -1, -1):
        stable[k] = _orth(np.linalg.solve(cocycle.trans[k], stable[k + 1]))

    gap_min = np.inf
    for k in np.unique(np.linspace(0, m - window, 8).astype(int)):
        svals = np.linalg.svd(cocycle.window_product(k, k + window), compute_uv=False)
        gap_min = min(gap_min, float(svals[q - 1] / svals[q]))
    if gap_min < 1.2:
        raise DominationGapError(
            f"singular-value ratio {gap_min:.3f} < 1.2 at rank {q} over windows of "
            f"{window_time:.3g} time units; no dominated splitting at this rank"
        )

    k_lo, k_hi = window, m - window
    residual = 0.0
    probe = np.unique(np.linspace(k_lo, k_hi, min(50, k_hi - k_lo + 1)).astype(int))
    for k in probe:
        combined = np.hstack([stable[k], unstable[k]])
        smin = np.linalg.svd(combined, compute_uv=False)[-1]
        if smin < 1e-6:
            raise SplittingDegenerateError(
                f"stable and unstable bundles nearly tangent at sample {k} "
                f"(sigma_min = {smin:.3g})"
            )
        if k < k_hi:
            img = cocycle.trans[k] @ stable[k]
            proj = stable[k + 1] @ (stable[k + 1].T @ img)
            residual = max(
                residual,
                float(np.linalg.norm(img - proj) / max(np.linalg.norm(img), 1e-300)),
            )
    return SplittingEstimate(cocycle, p, window, stable, unstable, gap_min, residual)


def _batched_window_scan(est: SplittingEstimate, ks: np.ndarray, j_max: int):
    """Yield ``(j, norms, conorms)`` for window products of length ``j``.

    ``norms[k]`` is the largest singular value of the product restricted to
    the stable basis at base ``ks[k]``; ``conorms[k]`` the smallest singular
    value restricted to the unstable basis.  Products grow incrementally,
    one batched matrix multiply per step.
    """
    trans = est.cocycle.trans
    n1 = trans.shape[1]
    bs = est.stable[ks]
    bu = est.unstable[ks]
    w = np.broadcast_to(np.eye(n1), (len(ks), n1, n1)).copy()
    for j in range(1, j_max + 1):
        w = trans[ks + (j - 1)] @ w
        norms = np.linalg.svd(w @ bs, compute_uv=False)[:, 0]
        conorms = np.linalg.svd(w @ bu, compute_uv=False)[:, -1]
        yield j, norms, conorms


@dataclass(frozen=True)
class DominationCheck:
    ok: bool
    l: float
    worst_product: float
    worst_base_time: float
    worst_t: float
    products_per_t: tuple  # of (t, max over bases)
    n_bases: int


def check_domination(est: SplittingEstimate, l: float) -> DominationCheck:
    """Check ``|Psi_t restricted to stable| * |Psi_-t restricted to unstable| <= 1/2``
    for every sampled base point and every ``t`` in ``[l, 3l]`` on the grid.

    The backward norm on the unstable bundle is the reciprocal of the
    forward conorm, so the checked product is ``norm / conorm``.
    """
    dt = est.cocycle.dt
    l = float(l)
    if l <= 0:
        raise ValueError("l must be positive")
    j_lo = max(1, math.ceil(l / dt - 1e-9))
    j_hi = math.floor(3.0 * l / dt + 1e-9)
    if j_hi < j_lo:
        raise ValueError(f"no grid times inside [{l}, {3 * l}] at dt={dt:.3g}")
    hi_base = min(est.k_hi, est.cocycle.steps - j_hi)
    if hi_base < est.k_lo:
        raise ValueError("cocycle too short for the requested window; extend the orbit")
    ks = np.arange(est.k_lo, hi_base + 1)

    worst = -np.inf
    worst_base = worst_t = 0.0
    per_t = []
    for j, norms, conorms in _batched_window_scan(est, ks, j_hi):
        if j < j_lo:
            continue
        products = norms / conorms
        idx = int(np.argmax(products))
        if products[idx] > worst:
            worst = float(products[idx])
            worst_base = float(est.cocycle.times[ks[idx]])
            worst_t = j * dt
        per_t.append((j * dt, float(products.max())))
    return DominationCheck(
        ok=bool(worst <= 0.5 + 1e-12),
        l=l,
        worst_product=worst,
        worst_base_time=worst_base,
        worst_t=worst_t,
        products_per_t=tuple(per_t),
        n_bases=len(ks),
    )


@dataclass(frozen=True)
class HyperbolicFit:
    ok: bool
    lambda_stable: float
    c_stable: float
    stable_ok: bool
    lambda_unstable: float
    c_unstable: float
    unstable_ok: bool
    t_range: tuple
    reason: str


def fit_hyperbolic(
    est: SplittingEstimate,
    t_lo: float = 1.0,
    t_hi: Optional[float] = None,
    n_times: int = 12,
    n_bases: int = 60,
) -> HyperbolicFit:
    """Least-squares fit of ``C * lambda^t`` envelopes on both bundles.

    The stable side fits the forward norm on the stable bundle; the
    unstable side fits the backward norm on the unstable bundle (reciprocal
    forward conorm).  Each ``C`` is inflated so the envelope dominates every
    sample.  A bundle fails when its fitted rate is not below 1 by at least
    1e-3, and the overall fit fails if either side does.
    """
    dt = est.cocycle.dt
    m = est.cocycle.steps
    if t_hi is None:
        t_hi = min(8.0, 0.6 * dt * (m - est.k_lo))
    j_lo = max(1, math.ceil(t_lo / dt - 1e-9))
    j_hi = min(math.floor(t_hi / dt + 1e-9), m - est.k_lo)
    if j_hi < j_lo + 3:
        raise ValueError("sampled span too short for a meaningful fit")
    hi_base = min(est.k_hi, m - j_hi)
    ks = np.unique(np.linspace(est.k_lo, hi_base, min(n_bases, hi_base - est.k_lo + 1)).astype(int))
    j_grid = set(np.unique(np.linspace(j_lo, j_hi, n_times).astype(int)))

    ts, log_s, log_u = [], [], []
    for j, norms, conorms in _batched_window_scan(est, ks, j_hi):
        if j not in j_grid:
            continue
        t = j * dt
        ts.extend([t] * len(ks))
        log_s.extend(np.log(norms))
        log_u.extend(np.log(1.0 / conorms))
    ts = np.asarray(ts)
    log_s = np.asarray(log_s)
    log_u = np.asarray(log_u)

    slope_s = np.polyfit(ts, log_s, 1)[0]
    slope_u = np.polyfit(ts, log_u, 1)[0]
    lam_s = float(np.exp(slope_s))
    lam_u = float(np.exp(slope_u))
    c_s = float(np.exp(np.max(log_s - slope_s * ts)))
    c_u = float(np.exp(np.max(log_u - slope_u * ts)))
    stable_ok = lam_s < 1.0 - 1e-3
    unstable_ok = lam_u < 1.0 - 1e-3
    reasons = []
    if not stable_ok:
        reasons.append(f"stable bundle rate {lam_s:.6g} not below 1")
    if not unstable_ok:
        reasons.append(f"unstable bundle backward rate {lam_u:.6g} not below 1")
    return HyperbolicFit(
        ok=stable_ok and unstable_ok,
        lambda_stable=lam_s,
        c_stable=c_s,
        stable_ok=stable_ok,
        lambda_unstable=lam_u,
        c_unstable=c_u,
        unstable_ok=unstable_ok,
        t_range=(j_lo * dt, j_hi * dt),
        reason="; ".join(reasons) if reasons else "both bundles contract",
    )


@dataclass(frozen=True)
class QuasiHyperbolicCertificate:
    """Partitioned log-norm inequalities along one finite arc.

    The arc ``[0, tau]`` is cut into steps of length ``big_t`` (the last
    step absorbs the remainder, so its length lies in ``[big_t, 2*big_t)``).
    With ``a_j`` the stable log-norm and ``b_j`` the unstable log-conorm of
    step ``j``, the certificate holds when every leading average of the
    ``a_j`` is at most ``-eta``, every trailing average of the ``b_j`` is at
    least ``eta``, and every single step has ``a_j - b_j <= -2 eta``.  All
    slacks are reported (nonnegative means the inequality holds).
    """

    ok: bool
    eta: float
    big_t: float
    tau: float
    boundaries: tuple
    log_norms_stable: tuple
    log_conorms_unstable: tuple
    slack_leading: tuple
    slack_trailing: tuple
    slack_stepwise: tuple
    worst_slack: float


def check_quasi_hyperbolic(
    spec: VectorFieldSpec,
    x,
    tau: float,
    est: SplittingEstimate,
    eta: float,
    big_t: float,
) -> QuasiHyperbolicCertificate:
    """Evaluate the quasi-hyperbolicity inequalities on the arc ``[0, tau]``.

    ``est`` must be built on the orbit of ``x`` with its cocycle covering
    ``[0, tau]`` inside the valid sample range (pad the cocycle by one
    window on each side).  Step boundaries snap to the cocycle grid.
    """
    if eta <= 0 or big_t <= 0:
        raise ValueError("eta and big_t must be positive")
    tau = float(tau)
    if tau < big_t:
        raise ValueError(f"arc length {tau:.6g} is shorter than one step {big_t:.6g}")
    cocycle = est.cocycle
    x = np.asarray(x, dtype=float)
    k0 = cocycle.index_of_time(0.0)
    anchor_gap = distance(spec, cocycle.points[k0], x)
    if anchor_gap > 1e-5 * (1.0 + float(np.linalg.norm(x))):
        raise ValueError(
            f"the splitting estimate is anchored {anchor_gap:.3g} away from the arc start"
        )

    n_full = int(math.floor(tau / big_t + 1e-9))
    bounds = [j * big_t for j in range(n_full)] + [tau]
    idx = [cocycle.index_of_time(b) for b in bounds]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("big_t is too small for the cocycle sample grid")
    if idx[0] < est.k_lo or idx[-1] > est.k_hi:
        raise ValueError("the cocycle does not cover the arc plus one window; pad it")

    snapped = [float(cocycle.times[i]) for i in idx]
    steps = len(idx) - 1
    a = np.empty(steps)
    b = np.empty(steps)
    for j in range(steps):
        w = cocycle.window_product(idx[j], idx[j + 1])
        bs, bu = est.basis_at(idx[j])
        a[j] = math.log(np.linalg.norm(w @ bs, 2))
        b[j] = math.log(np.linalg.svd(w @ bu, compute_uv=False)[-1])
    durations = np.diff(snapped)
    lead_t = np.cumsum(durations)
    lead = -eta - np.cumsum(a) / lead_t
    trail_t = lead_t[-1] - np.concatenate([[0.0], lead_t[:-1]])
    trail = (np.cumsum(b[::-1])[::-1] / trail_t) - eta
    stepwise = b - a - 2.0 * eta
    worst = float(min(lead.min(), trail.min(), stepwise.min()))
    return QuasiHyperbolicCertificate(
        ok=bool(worst >= -1e-12),
        eta=eta,
        big_t=big_t,
        tau=tau,
        boundaries=tuple(snapped),
        log_norms_stable=tuple(float(v) for v in a),
        log_conorms_unstable=tuple(float(v) for v in b),
        slack_leading=tuple(float(v) for v in lead),
        slack_trailing=tuple(float(v) for v in trail),
        slack_stepwise=tuple(float(v) for v in stepwise),
        worst_slack=worst,
    )


@dataclass(frozen=True)
class UniformEstimates:
    """Uniform spectral margins over a family of hyperbolic periodic orbits."""

    ok: bool
    eta: float
    t_min: float
    orbits: tuple  # of per-orbit dicts


def uniform_periodic_estimates(
    spec: VectorFieldSpec,
    reports: Sequence[CriticalElementReport],
    t_min: float,
    eta: float,
    dt: float = 0.05,
    window_time: float = 3.0,
    tol: float = DEFAULT_TOL,
) -> UniformEstimates:
    """Check uniform expansion/contraction margins on periodic orbits.

    For each (hyperbolic, periodic) report the routine verifies, over bases
    along the orbit and all grid times ``t in [t_min, 3 * period]``, that
    the conorm/norm rate gap ``(log conorm_u - log norm_s) / t`` clears
    ``2 * eta`` (slack ``slack_rate_gap``), and that the ``t_min``-step
    partition of one period has averaged stable log-norms at most ``-eta``
    and averaged unstable log-conorms at least ``eta``.
    """
    if t_min <= 0 or eta <= 0:
        raise ValueError("t_min and eta must be positive")
    results = []
    ok = True
    for rep in reports:
        if rep.kind != "periodic":
            raise ValueError("uniform estimates apply to periodic-orbit reports only")
        if not rep.hyperbolic:
            raise ValueError(
                "a non-hyperbolic periodic orbit cannot satisfy uniform estimates"
            )
        period = float(rep.period)
        if 3.0 * period < t_min:
            raise ValueError(f"t_min={t_min:.6g} exceeds three periods of the orbit")
        p_stable = rep.index if 1 <= rep.index <= spec.dim - 2 else None
        if p_stable is None:
            raise ValueError("orbit must have nontrivial stable and unstable parts")
        total = 4.0 * period + 2.0 * window_time
        cocycle = build_cocycle(
            spec, np.asarray(rep.point, dtype=float), total, dt, t_start=-window_time, tol=tol
        )
        est = estimate_splitting(cocycle, p_stable, window_time)

        base_times = np.linspace(0.0, period, 17)[:-1]
        ks = np.unique([cocycle.index_of_time(t) for t in base_times])
        j_hi = min(
            int(math.floor(3.0 * period / cocycle.dt + 1e-9)),
            cocycle.steps - int(ks.max()),
        )
        j_lo = max(1, int(math.ceil(t_min / cocycle.dt - 1e-9)))
        j_grid = set(np.unique(np.linspace(j_lo, j_hi, 24).astype(int)))
        slack_gap = np.inf
        for j, norms, conorms in _batched_window_scan(est, ks, j_hi):
            if j not in j_grid:
                continue
            t = j * cocycle.dt
            gap = (np.log(conorms) - np.log(norms)) / t - 2.0 * eta
            slack_gap = min(slack_gap, float(gap.min()))

        n_full = int(math.floor(period / t_min + 1e-9))
        bounds = [j * t_min for j in range(n_full)] + [period]
        idx = [cocycle.index_of_time(b) for b in bounds]
        a_sum = b_sum = 0.0
        for j in range(len(idx) - 1):
            w = cocycle.window_product(idx[j], idx[j + 1])
            bs, bu = est.basis_at(idx[j])
            a_sum += math.log(np.linalg.norm(w @ bs, 2))
            b_sum += math.log(np.linalg.svd(w @ bu, compute_uv=False)[-1])
        span = float(cocycle.times[idx[-1]] - cocycle.times[idx[0]])
        slack_stable = -eta - a_sum / span
        slack_unstable = b_sum / span - eta

        orbit_ok = min(slack_gap, slack_stable, slack_unstable) >= -1e-12
        ok = ok and orbit_ok
        results.append(
            {
                "point": tuple(float(c) for c in np.asarray(rep.point)),
                "period": period,
                "slack_rate_gap": float(slack_gap),
                "slack_stable_sum": float(slack_stable),
                "slack_unstable_sum": float(slack_unstable),
                "ok": bool(orbit_ok),
            }
        )
    return UniformEstimates(ok=bool(ok), eta=eta, t_min=t_min, orbits=tuple(results))


@dataclass(frozen=True)
class PeriodicShadow:
    point: np.ndarray
    period: float
    distance: float
    newton_residual: float
    newton_iterations: int


def arc_to_periodic_orbit(
    spec: VectorFieldSpec,
    x,
    tau: float,
    cert: QuasiHyperbolicCertificate,
    delta: float,
    tol: float = DEFAULT_TOL,
    samples: int = 256,
) -> PeriodicShadow:
    """Close a certified arc with nearly matching endpoints into a periodic
    orbit and measure how far the orbit strays from the arc.

    Preconditions: ``cert.ok`` and endpoint gap ``d(X_tau(x), x) < delta``.
    The reported distance is the optimal monotone-matching maximum between
    dense samples of the arc and of the found orbit.
    """
    from .shadowing import frechet_match, pairwise_distances

    if not cert.ok:
        raise ValueError("the quasi-hyperbolicity certificate does not hold")
    x = np.asarray(x, dtype=float)
    tau = float(tau)
    arc = integrate(spec, x, (0.0, tau), tol=tol)
    gap = distance(spec, arc.at(tau), x)
    if gap >= delta:
        raise ValueError(
            f"endpoint gap {gap:.3g} is not below delta={delta:.3g}; "
            "the arc does not nearly close up"
        )
    pp = find_periodic_newton(spec, x, tau, tol=tol)
    cycle = integrate(spec, pp.point, (0.0, pp.period), tol=tol)
    arc_pts = arc.at_many(np.linspace(0.0, tau, samples))
    cyc_pts = cycle.at_many(np.linspace(0.0, pp.period, samples))
    value, _ = frechet_match(pairwise_distances(spec, arc_pts, cyc_pts))
    return PeriodicShadow(
        point=pp.point,
        period=pp.period,
        distance=float(value),
        newton_residual=pp.residual,
        newton_iterations=pp.iterations,
    )
