"""Time allocation for a fixed offloading decision, plus reference maximizers.

For a fixed decision ``x`` the weighted sum rate is jointly concave in the
energy-transfer share ``a`` and the upload shares ``tau``.  The fast path
(:func:`solve_batch`) works on the Lagrangian dual of the time budget:

* for a multiplier ``nu`` every offloading device sets its marginal upload
  value equal to ``nu``.  In terms of ``y = c a / tau`` that reads
  ``w (B/vu) [log2(1+y) - y/((1+y) ln 2)] = nu`` and only depends on the
  device weight, so devices sharing a weight share ``y``;
* the energy-transfer share follows from the stationarity in ``a``;
* ``nu`` is located by a bracketed Newton/bisection search on a scalar
  monotone residual, independently for every row of the batch.

Each row only needs the per-weight-class sums of ``c_j`` over offloaders and
the sum of local-rate coefficients over local devices, which is what makes
full enumeration over ``2**N`` decisions affordable.

:func:`solve_p2_nested` is the literal formulation (golden-section over ``a``
with an inner dual bisection and per-device bisection over ``tau``); it is
much slower and serves as an independent cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .env import Allocation, ChannelRealization, SystemParams, weighted_sum_rate

log = logging.getLogger(__name__)

MAX_ENUM_DEVICES = 14
_INV_NEWTON_STEPS = 8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class EnumerationLimitError(ValueError):
    pass


@dataclass
class SolveReport:
    allocation: Allocation
    iterations: int
    converged: bool

    @property
    def value(self) -> float:
        return self.allocation.value


@dataclass
class BatchSolution:
    """Row-wise results of :func:`solve_batch` (one row per decision)."""

    values: np.ndarray
    a: np.ndarray
    nu: np.ndarray
    u: np.ndarray          # log(1 + y) per (row, weight class)
    iterations: np.ndarray
    converged: np.ndarray


def as_decision(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("offloading decision must be a 1-D vector")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("offloading decision entries must be 0 or 1")
    if n is not None and arr.size != n:
        raise ValueError(f"offloading decision must have length {n}")
    return arr.astype(np.int8)


def decision_code(x) -> int:
    """Integer value of ``x`` with device 0 as the least significant bit."""
    return int(sum(int(b) << i for i, b in enumerate(np.asarray(x))))


def all_decisions(n: int) -> np.ndarray:
    """Every decision in ascending :func:`decision_code` order, shape ``(2**n, n)``."""
    codes = np.arange(2 ** n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)


def _gains(h) -> np.ndarray:
    return h.gains if isinstance(h, ChannelRealization) else np.asarray(h, dtype=float)


class FrameTerms:
    """Per-frame constants shared by every decision evaluated on one channel."""

    def __init__(self, h, params: SystemParams):
        g = _gains(h)
        if g.shape != (params.n_devices,):
            raise ValueError("channel vector length does not match n_devices")
        self.params = params
        self.h = g
        self.w = params.weight_array
        self.local_coef = self.w * params.eta1 * np.cbrt(g / params.k_array)
        self.c = params.mu * params.power_P * g ** 2 / params.noise_N0
        self.eps = params.bandwidth_B / (params.vu * math.log(2.0))
        self.class_w, self.class_of = np.unique(self.w, return_inverse=True)

    def row_sums(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Local-rate coefficient sum ``A`` and per-class ``sum c`` of offloaders for each row."""
        X = np.asarray(X)
        M, n = X.shape
        A = np.zeros(M)
        C = np.zeros((M, self.class_w.size))
        # explicit device loop keeps the summation order independent of the batch
        for j in range(n):
            on = X[:, j] == 1
            A += np.where(on, 0.0, self.local_coef[j])
            C[:, self.class_of[j]] += np.where(on, self.c[j], 0.0)
        return A, C


def inverse_marginal(s: np.ndarray) -> np.ndarray:
    """Solve ``u - 1 + exp(-u) = s`` for ``u > 0`` (``u = ln(1+y)``).

    The left side equals ``ln(1+y) - y/(1+y)``, the normalized marginal value
    of upload time.  Newton's method on this convex increasing function is
    started at ``s + sqrt(2 s)`` and run a fixed number of steps so that the
    result for an entry never depends on the other entries.
    """
    s = np.asarray(s, dtype=float)
    u = s + np.sqrt(2.0 * s)
    for _ in range(_INV_NEWTON_STEPS):
        em = np.expm1(-u)
        u = u - (u + em - s) / (-em)
    return u


def _dual_terms(nu, C, A, eps, class_w):
    """Residual ``nu - Phi - (A/3)(1+R)^(2/3)`` and its derivative for each row."""
    s = nu[:, None] / (eps * class_w[None, :])
    u = np.minimum(inverse_marginal(s), 700.0)
    y = np.expm1(u)
    inv_y = 1.0 / y
    R = np.zeros(nu.shape)
    Phi = np.zeros(nu.shape)
    dR = np.zeros(nu.shape)
    for k in range(class_w.size):
        Ck = C[:, k]
        R += Ck * inv_y[:, k]
        Phi += class_w[k] * eps * Ck * np.exp(-u[:, k])
        dR += Ck / (eps * class_w[k]) * (1.0 + inv_y[:, k]) ** 2 * inv_y[:, k]
    one_r = 1.0 + R
    res = nu - Phi - (A / 3.0) * one_r ** (2.0 / 3.0)
    dres = one_r + (2.0 * A / 9.0) * one_r ** (-1.0 / 3.0) * dR
    return res, dres, u, R


def solve_batch(h, X, params: SystemParams, tol: float = 1e-6, max_iter: int = 200,
                terms: FrameTerms | None = None) -> BatchSolution:
    """Optimal time allocation value for every decision row of ``X``.

    Rows are solved independently: the result for a row is bit-identical
    whatever else is in the batch.
    """
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    terms = terms or FrameTerms(h, params)
    X = np.atleast_2d(np.asarray(X))
    M = X.shape[0]
    A, C = terms.row_sums(X)
    eps, cw = terms.eps, terms.class_w
    has_off = C.sum(axis=1) > 0

    values = A.copy()
    a = np.ones(M)
    nu = np.zeros(M)
    u = np.zeros((M, cw.size))
    iters = np.zeros(M, dtype=np.int64)
    converged = np.ones(M, dtype=bool)

    rows = np.flatnonzero(has_off)
    if rows.size:
        rtol = tol * 1e-6
        Cr, Ar = C[rows], A[rows]
        # bracket the root of the increasing residual
        hi = (cw[None, :] * eps * Cr).sum(axis=1) + Ar
        lo = np.zeros(rows.size)
        need = np.ones(rows.size, dtype=bool)
        for _ in range(max_iter):
            if not need.any():
                break
            idx = np.flatnonzero(need)
            r, _, _, _ = _dual_terms(hi[idx], Cr[idx], Ar[idx], eps, cw)
            up = r <= 0
            lo[idx[up]] = hi[idx[up]]
            hi[idx[up]] *= 4.0
            need[idx[~up]] = False
        lo_missing = lo <= 0
        lo[lo_missing] = hi[lo_missing] / 4.0
        need = lo_missing.copy()
        for _ in range(max_iter):
            if not need.any():
                break
            idx = np.flatnonzero(need)
            r, _, _, _ = _dual_terms(lo[idx], Cr[idx], Ar[idx], eps, cw)
            down = r >= 0
            hi[idx[down]] = lo[idx[down]]
            lo[idx[down]] /= 4.0
            need[idx[~down]] = False

        # safeguarded Newton on nu, each row frozen once its own step is small
        x = np.sqrt(lo * hi)
        active = np.ones(rows.size, dtype=bool)
        it = np.zeros(rows.size, dtype=np.int64)
        for _ in range(max_iter):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            xi = x[idx]
            r, dr, _, _ = _dual_terms(xi, Cr[idx], Ar[idx], eps, cw)
            neg = r < 0
            lo[idx[neg]] = xi[neg]
            hi[idx[~neg]] = xi[~neg]
            step = r / dr
            cand = xi - step
            it[idx] += 1
            lo_i, hi_i = lo[idx], hi[idx]
            done = (np.abs(step) <= rtol * xi) | (hi_i - lo_i <= rtol * lo_i) | (r == 0)
            bad = ~done & ~((cand > lo_i) & (cand < hi_i))
            cand[bad] = np.sqrt(lo_i[bad] * hi_i[bad])
            cand[done] = np.clip(cand[done], lo_i[done], hi_i[done])
            x[idx] = cand
            active[idx[done]] = False
        conv_r = ~active

        _, _, ur, Rr = _dual_terms(x, Cr, Ar, eps, cw)
        ar = 1.0 / (1.0 + Rr)
        yr = np.expm1(ur)
        # offload part: sum over classes of w (B/vu) log2(1+y) * tau_class, tau_class = a C / y
        off = np.zeros(rows.size)
        for k in range(cw.size):
            off += cw[k] * params.bandwidth_B / params.vu * (ur[:, k] / math.log(2.0)) * (ar * Cr[:, k] / yr[:, k])
        values[rows] = Ar * np.cbrt(ar) + off
        a[rows] = ar
        nu[rows] = x
        u[rows] = ur
        iters[rows] = it
        converged[rows] = conv_r
    return BatchSolution(values=values, a=a, nu=nu, u=u, iterations=iters, converged=converged)


def solve_p2(h, x, params: SystemParams, tol: float = 1e-6, terms: FrameTerms | None = None) -> SolveReport:
    """Optimal ``(a, tau)`` and weighted sum rate for a single decision."""
    x = as_decision(x, params.n_devices)
    terms = terms or FrameTerms(h, params)
    sol = solve_batch(h, x[None, :], params, tol=tol, terms=terms)
    a = float(sol.a[0])
    tau = np.zeros(params.n_devices)
    if x.any():
        y = np.expm1(sol.u[0])[terms.class_of]
        tau = np.where(x == 1, a * terms.c / y, 0.0)
    alloc = Allocation(a=a, tau=tau, value=float(sol.values[0]))
    return SolveReport(allocation=alloc, iterations=int(sol.iterations[0]), converged=bool(sol.converged[0]))


# ---------------------------------------------------------------------------
# literal nested formulation (slow, used as an independent check)

def _upload_marginal(tau, ca, w, params: SystemParams):
    y = ca / tau
    return w * params.bandwidth_B / params.vu * (np.log2(1.0 + y) - y / ((1.0 + y) * math.log(2.0)))


def _tau_for_multiplier(nu, ca, w, params, steps=60):
    lo = np.full(ca.shape, 1e-12)
    hi = np.ones(ca.shape)
    at_hi = _upload_marginal(hi, ca, w, params) >= nu
    at_lo = _upload_marginal(lo, ca, w, params) <= nu
    for _ in range(steps):
        mid = np.sqrt(lo * hi)
        big = _upload_marginal(mid, ca, w, params) > nu
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    tau = np.sqrt(lo * hi)
    tau = np.where(at_hi, 1.0, tau)
    return np.where(at_lo & ~at_hi, 1e-12, tau)


def partial_max(h, x, params: SystemParams, a: float, steps: int = 60) -> tuple[float, np.ndarray]:
    """``max over tau`` of the objective at a fixed energy-transfer share ``a``.

    Dual bisection on the budget multiplier with per-device bisection over
    ``tau``; returns the value and the per-device upload shares.
    """
    g = _gains(h)
    x = as_decision(x, params.n_devices)
    w = params.weight_array
    local = float(np.sum(np.where(x == 0, w * params.eta1 * np.cbrt(g / params.k_array) * np.cbrt(a), 0.0)))
    off = np.flatnonzero(x == 1)
    tau = np.zeros(params.n_devices)
    budget = 1.0 - a
    if off.size == 0 or a <= 0 or budget <= 0:
        return local, tau
    ca = params.mu * params.power_P * g[off] ** 2 * a / params.noise_N0
    wo = w[off]
    nu_lo, nu_hi = 0.0, float(np.max(_upload_marginal(np.full(off.size, budget / off.size), ca, wo, params)))
    while _tau_for_multiplier(nu_hi, ca, wo, params, steps).sum() >= budget:
        nu_hi *= 2.0
    s_lo = _tau_for_multiplier(nu_lo, ca, wo, params, steps).sum()
    s_hi = _tau_for_multiplier(nu_hi, ca, wo, params, steps).sum()
    for _ in range(steps):
        assert s_lo >= s_hi, "total upload time must be nonincreasing in the multiplier"
        mid = 0.5 * (nu_lo + nu_hi)
        s_mid = _tau_for_multiplier(mid, ca, wo, params, steps).sum()
        if s_mid > budget:
            nu_lo, s_lo = mid, s_mid
        else:
            nu_hi, s_hi = mid, s_mid
    t = _tau_for_multiplier(nu_hi, ca, wo, params, steps)
    t = t * (budget / t.sum())
    tau[off] = t
    y = ca / t
    rate = wo * params.bandwidth_B / params.vu * t * np.log2(1.0 + y)
    return local + float(rate.sum()), tau


def solve_p2_nested(h, x, params: SystemParams, tol: float = 1e-6, max_iter: int = 200) -> SolveReport:
    """Golden-section search over ``a`` around :func:`partial_max`."""
    x = as_decision(x, params.n_devices)
    g = _gains(h)
    if not x.any():
        value = float(np.sum(params.weight_array * params.eta1 * np.cbrt(g / params.k_array)))
        return SolveReport(Allocation(1.0, np.zeros(params.n_devices), value), 0, True)
    lo, hi = 0.0, 1.0
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = partial_max(g, x, params, c)[0], partial_max(g, x, params, d)[0]
    it = 0
    while hi - lo > tol and it < max_iter:
        it += 1
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = partial_max(g, x, params, c)[0]
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = partial_max(g, x, params, d)[0]
    a = 0.5 * (lo + hi)
    value, tau = partial_max(g, x, params, a)
    return SolveReport(Allocation(a, tau, value), it, hi - lo <= tol)


# ---------------------------------------------------------------------------
# reference maximizers over all decisions

def exhaustive_best(h, params: SystemParams, tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Best decision over all ``2**N``; ties go to the smallest :func:`decision_code`."""
    n = params.n_devices
    if n > MAX_ENUM_DEVICES:
        raise EnumerationLimitError(f"exhaustive search is capped at {MAX_ENUM_DEVICES} devices, got {n}")
    X = all_decisions(n)
    sol = solve_batch(h, X, params, tol=tol)
    vals = np.where(sol.converged, sol.values, -np.inf)
    best = int(np.argmax(vals))
    return X[best].copy(), float(vals[best])


def local_search_best(h, params: SystemParams, starts: int = 16, rng: np.random.Generator | None = None,
                      tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Steepest single-bit-flip ascent from several starting decisions.

    Starts are the all-local decision, the all-offload decision, then random
    decisions drawn from ``rng``.  All starts climb in lockstep so each round
    is a single batched solve.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    n = params.n_devices
    rng = rng if rng is not None else np.random.default_rng(0)
    terms = FrameTerms(h, params)
    init = [np.zeros(n, np.int8), np.ones(n, np.int8)][:starts]
    while len(init) < starts:
        init.append(rng.integers(0, 2, size=n).astype(np.int8))
    cur = np.array(init)
    cur_val = solve_batch(h, cur, params, tol=tol, terms=terms).values
    active = np.ones(starts, dtype=bool)
    flips = np.eye(n, dtype=np.int8)
    while active.any():
        idx = np.flatnonzero(active)
        nbrs = (cur[idx][:, None, :] ^ flips[None, :, :]).reshape(-1, n)
        vals = solve_batch(h, nbrs, params, tol=tol, terms=terms).values.reshape(idx.size, n)
        j = np.argmax(vals, axis=1)
        best = vals[np.arange(idx.size), j]
        improve = best > cur_val[idx]
        for r in np.flatnonzero(improve):
            s = idx[r]
            assert best[r] > cur_val[s]
            cur[s, j[r]] ^= 1
            cur_val[s] = best[r]
        active[idx[~improve]] = False
    b = int(np.argmax(cur_val))
    return cur[b].copy(), float(cur_val[b])


def normalized_rate(value: float, ref_value: float) -> float:
    if not ref_value > 0:
        raise ValueError("reference value must be positive")
    return value / ref_value


def check_allocation(h, x, report: SolveReport, params: SystemParams) -> float:
    """Recompute the objective of a solved allocation from the rate formulas."""
    return weighted_sum_rate(h if isinstance(h, ChannelRealization) else ChannelRealization(h), x,
                             report.allocation, params)
