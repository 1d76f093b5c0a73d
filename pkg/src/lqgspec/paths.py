"""Path Monte Carlo: Brownian bridges, the drifted BM conditioned to stay
non-negative, the two-sided cone process and the cone-constant estimator.

Random streams: every sampler takes an integer ``seed``.  Batch estimators
split their paths into fixed-size chunks and give chunk ``c`` the generator
``default_rng(SeedSequence(seed).spawn(...)[c])``, so results do not depend on
how chunks are scheduled.  Path-level results are reduced with ``math.fsum``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import CapExceededError, DomainError, GridMismatchError, PreconditionError
from .gmc import LiouvilleMeasure

CHUNK = 2000
TAIL_LOG = 6.9  # ~ log(10^3): tail terms below 1e-3 of the target


@dataclass
class PathSample:
    kind: str
    dt: float
    times: np.ndarray
    values: np.ndarray
    params: dict = field(default_factory=dict)


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    params: dict = field(default_factory=dict)
    target: float | None = None

    @property
    def z_score(self) -> float:
        if self.target is None:
            return math.nan
        return (self.mean - self.target) / self.stderr

    @property
    def rel_error(self) -> float:
        if self.target is None:
            return math.nan
        return abs(self.mean - self.target) / abs(self.target)


def _estimate(values: np.ndarray, params: dict, target=None) -> MCEstimate:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        raise PreconditionError("need at least two paths")
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return MCEstimate(mean, math.sqrt(var / n), n, params, target)


def _chunk_rngs(seed: int, n_items: int, chunk: int = CHUNK):
    n_chunks = -(-n_items // chunk)
    for c, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        lo = c * chunk
        yield lo, min(n_items, lo + chunk), np.random.default_rng(child)


# --------------------------------------------------------------------------
# Brownian bridges
# --------------------------------------------------------------------------

def sample_bridge2d(anchor, duration: float, steps: int, seed: int) -> PathSample:
    """Planar Brownian bridge from ``anchor`` back to ``anchor`` in time ``duration``.

    Built as ``W_s - (s/l) W_l + anchor`` on a uniform grid; both endpoints
    equal ``anchor`` exactly.
    """
    if steps < 2:
        raise PreconditionError("steps must be >= 2")
    if duration <= 0:
        raise DomainError("duration must be positive")
    anchor = np.asarray(anchor, dtype=np.float64).reshape(2)
    rng = np.random.default_rng(seed)
    dt = duration / steps
    w = np.zeros((steps + 1, 2))
    w[1:] = np.cumsum(rng.standard_normal((steps, 2)) * math.sqrt(dt), axis=0)
    frac = np.arange(steps + 1) / steps
    b = w - frac[:, None] * w[-1][None, :] + anchor[None, :]
    b[0] = anchor
    b[-1] = anchor
    return PathSample("bridge2d", dt, frac * duration, b,
                      {"anchor": tuple(anchor), "duration": duration, "steps": steps})


def _bridge_batch(rng, count: int, steps: int, duration: float, dims: int = 1) -> np.ndarray:
    dt = duration / steps
    w = np.empty((count, steps + 1, dims))
    w[:, 0] = 0.0
    np.cumsum(rng.standard_normal((count, steps, dims)) * math.sqrt(dt), axis=1, out=w[:, 1:])
    frac = (np.arange(steps + 1) / steps)[None, :, None]
    b = w - frac * w[:, -1:, :]
    b[:, -1] = 0.0
    return b


@dataclass
class ExceedanceCheck:
    level: float
    probability: float
    stderr: float
    exact: float
    n_paths: int
    steps: int

    @property
    def z_score(self) -> float:
        return (self.probability - self.exact) / self.stderr


def bridge_max_exceedance(levels, duration: float = 1.0, steps: int = 1000,
                          n_paths: int = 100_000, seed: int = 0, correction: bool = True):
    """Empirical ``P(max_s b_s >= k)`` for a 1D bridge from 0 to 0, per level.

    With ``correction=True`` a crossing between grid points is also counted,
    drawn with the exact conditional probability
    ``exp(-2 (k - b_i)(k - b_{i+1}) / dt)`` of the bridge between two grid
    values, so the estimate is unbiased for the continuous maximum at any
    step count.  ``stderr`` is the binomial standard error
    ``sqrt(p(1-p)/n)`` evaluated at the exact value.
    """
    levels = np.atleast_1d(np.asarray(levels, dtype=np.float64))
    dt = duration / steps
    hits = np.zeros(levels.size, dtype=np.int64)
    for lo, hi, rng in _chunk_rngs(seed, n_paths, 500):
        b = _bridge_batch(rng, hi - lo, steps, duration)[..., 0]
        u = rng.random((hi - lo, levels.size))
        bmax = b.max(axis=1)
        for li, k in enumerate(levels):
            crossed = bmax >= k
            if correction:
                gap = np.maximum(k - b, 0.0)
                with np.errstate(divide="ignore"):
                    log_stay = np.log1p(-np.exp(-2.0 * gap[:, :-1] * gap[:, 1:] / dt)).sum(axis=1)
                crossed |= u[:, li] < -np.expm1(log_stay)
            hits[li] += int(crossed.sum())
    out = []
    for k, h in zip(levels, hits):
        exact = math.exp(-2.0 * k * k / duration)
        p = h / n_paths
        out.append(ExceedanceCheck(float(k), p, math.sqrt(exact * (1 - exact) / n_paths),
                                   exact, n_paths, steps))
    return out


def bridge_ball_probability(radii, duration: float = 1.0, steps: int = 1000,
                            n_paths: int = 20_000, seed: int = 0):
    """Empirical ``P(max_s |b_s| <= u)`` for a planar bridge, with the bound ``min(1, 2u^2/l)``.

    The grid maximum underestimates the continuous one, so the empirical
    probability errs upward, i.e. on the conservative side of the bound.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
    inside = np.zeros(radii.size, dtype=np.int64)
    for lo, hi, rng in _chunk_rngs(seed, n_paths, 500):
        b = _bridge_batch(rng, hi - lo, steps, duration, dims=2)
        rmax = np.sqrt((b**2).sum(axis=2)).max(axis=1)
        inside += (rmax[:, None] <= radii[None, :]).sum(axis=0)
    probs = inside / n_paths
    bounds = np.minimum(1.0, 2.0 * radii**2 / duration)
    return [(float(u), float(p), float(bd)) for u, p, bd in zip(radii, probs, bounds)]


# --------------------------------------------------------------------------
# Conditioned process (Williams time reversal) and the h-transform cross-check
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _first_passage(rng, m, x, dt, cap, bridge, buf):
    """Run B_t + m t from 0 until it reaches x.

    Returns (steps c, fraction theta): the crossing happens in step c, at
    time (c - 1 + theta) dt; buf[0..c-1] holds the pre-crossing grid values.
    """
    sq = math.sqrt(dt)
    b = 0.0
    buf[0] = 0.0
    for i in range(1, cap + 1):
        nb = b + sq * rng.standard_normal() + m * dt
        if nb >= x:
            return i, (x - b) / (nb - b)
        if bridge:
            if rng.random() < math.exp(-2.0 * (x - b) * (x - nb) / dt):
                return i, 0.5
        if i < buf.size:
            buf[i] = nb
        b = nb
    return -1, 0.0


def _level_cap(m: float, x: float, dt: float) -> int:
    # 10x the mean passage time x/m, plus the diffusive scale 1/m^2
    return int(math.ceil(10.0 * (x / m + 1.0 / m**2) / dt))


def _check_conditioned(m, x, dt):
    if m <= 0:
        raise DomainError("drift m must be positive")
    if x <= 0:
        raise DomainError("target level must be positive")
    if dt > 1e-3:
        raise PreconditionError("dt must be <= 1e-3")


def sample_conditioned(m: float, x: float, dt: float = 1e-3, seed: int = 0,
                       crossing: str = "linear") -> PathSample:
    """Drifted BM conditioned to stay non-negative, on ``[0, L_x]``.

    Simulates ``B_t + m t`` until it first reaches ``x`` (crossing time placed
    by linear interpolation within the crossing step) and returns the reversed
    path ``x - B^m_{tau - t}`` on the grid ``t = 0, dt, 2dt, ...`` plus the end
    point ``(tau, x)``.  ``crossing="bridge"`` additionally detects crossings
    between grid points with the Brownian-bridge probability.
    """
    _check_conditioned(m, x, dt)
    rng = np.random.default_rng(seed)
    cap = _level_cap(m, x, dt)
    buf = np.empty(cap + 1)
    c, theta = _first_passage(rng, m, x, dt, cap, crossing == "bridge", buf)
    if c < 0:
        raise CapExceededError(f"level {x} not reached within {cap} steps")
    fwd = buf[:c]  # grid values B_0..B_{c-1}, all below x
    tau = (c - 1 + theta) * dt
    # forward path on nodes s_0..s_{c-1}, then (tau, x)
    s_nodes = np.append(np.arange(c) * dt, tau)
    b_nodes = np.append(fwd, x)
    t_grid = np.arange(int(math.floor(tau / dt)) + 1) * dt
    vals = x - np.interp(tau - t_grid, s_nodes, b_nodes)
    vals[0] = 0.0
    times = np.append(t_grid, tau)
    values = np.append(vals, x)
    if times[-2] == times[-1]:
        times, values = times[:-1], values[:-1]
        values[-1] = x
    return PathSample("conditioned", dt, times, values, {"m": m, "level": x, "tau": tau})


@numba.njit(cache=True)
def _htransform_path_end(rng, m, x0, dt, nsteps):
    # drift-implicit Euler for dX = m coth(m X) dt + dW; the implicit
    # equation X - c - dt m coth(m X) = 0 has a unique positive root
    sq = math.sqrt(dt)
    xcur = x0
    for _ in range(nsteps):
        c = xcur + sq * rng.standard_normal()
        # Bessel(3) root as the starting guess, then Newton
        y = 0.5 * (c + math.sqrt(c * c + 4.0 * dt))
        for _it in range(30):
            my = m * y
            if my < 1e-8:
                coth = 1.0 / my + my / 3.0
                dcoth = -1.0 / (my * my) + 1.0 / 3.0
            else:
                coth = 1.0 / math.tanh(my)
                dcoth = 1.0 - coth * coth
            g = y - c - dt * m * coth
            dg = 1.0 - dt * m * m * dcoth
            ny = y - g / dg
            if ny <= 0.0:
                ny = 0.5 * y
            if abs(ny - y) <= 1e-14 * max(1.0, y):
                y = ny
                break
            y = ny
        xcur = y
    return xcur


def sample_conditioned_htransform(m: float, t: float, dt: float = 1e-3, seed: int = 0,
                                  x0: float = 1e-6) -> float:
    """Value at time ``t`` of the Doob-transform SDE ``dX = m coth(m X) dt + dW`` from ``x0``."""
    if m <= 0:
        raise DomainError("drift m must be positive")
    rng = np.random.default_rng(seed)
    return float(_htransform_path_end(rng, m, x0, dt, int(round(t / dt))))


@numba.njit(cache=True)
def _williams_marginal(rng, m, t, dt, x, cap, bridge, buf):
    c, theta = _first_passage(rng, m, x, dt, cap, bridge, buf)
    if c < 0:
        return -1.0, False
    tau = (c - 1 + theta) * dt
    if tau < t:
        return 0.0, False
    s = tau - t  # forward time whose value we need
    i = int(math.floor(s / dt))
    if i >= c - 1:
        # inside the crossing step, between B_{c-1} and x
        w = (s - (c - 1) * dt) / (tau - (c - 1) * dt) if tau > (c - 1) * dt else 1.0
        bs = buf[c - 1] + w * (x - buf[c - 1])
    else:
        w = s / dt - i
        bs = buf[i] + w * (buf[i + 1] - buf[i])
    return x - bs, True


@numba.njit(cache=True)
def _rejection_marginal(rng, m, t, dt, horizon):
    sq = math.sqrt(dt)
    n_t = int(round(t / dt))
    n_h = int(round(horizon / dt))
    b = 0.0
    at_t = 0.0
    for i in range(1, n_h + 1):
        b += sq * rng.standard_normal() + m * dt
        if b < 0.0:
            return -1.0
        if i == n_t:
            at_t = b
    return at_t


def conditioned_marginal(m: float, t: float, n_samples: int, dt: float = 1e-3, seed: int = 0,
                         method: str = "williams", horizon: float = 8.0, crossing: str = "linear"):
    """Samples of the conditioned process at time ``t`` by one of three routes.

    ``williams``: time reversal of the first passage to a level far enough
    that ``tau >= t`` (draws with ``tau < t`` are redrawn at twice the level).
    ``htransform``: drift-implicit Euler for the Doob-transformed SDE.
    ``rejection``: grid paths of ``B + m s`` on ``[0, horizon]`` kept only if
    they never go negative.
    """
    if m <= 0 or t <= 0:
        raise DomainError("need m > 0 and t > 0")
    out = np.empty(n_samples)
    if method == "htransform":
        steps = int(round(t / dt))
        for lo, hi, rng in _chunk_rngs(seed, n_samples):
            for i in range(lo, hi):
                out[i] = _htransform_path_end(rng, m, 1e-6, dt, steps)
        return out
    if method == "rejection":
        for lo, hi, rng in _chunk_rngs(seed, n_samples):
            i = lo
            while i < hi:
                v = _rejection_marginal(rng, m, t, dt, horizon)
                if v >= 0.0:
                    out[i] = v
                    i += 1
        return out
    if method == "williams":
        base = m * t + 6.1 * math.sqrt(t) + 1.0
        for lo, hi, rng in _chunk_rngs(seed, n_samples):
            for i in range(lo, hi):
                x = base
                while True:
                    cap = _level_cap(m, x, dt)
                    buf = np.empty(cap + 1)
                    v, ok = _williams_marginal(rng, m, t, dt, x, cap, crossing == "bridge", buf)
                    if ok:
                        out[i] = v
                        break
                    if v < 0:
                        raise CapExceededError(f"level {x} not reached within {cap} steps")
                    x *= 2.0
        return out
    raise PreconditionError(f"unknown method {method!r}")


def sample_beta(m: float, T: float, dt: float = 1e-3, seed: int = 0) -> PathSample:
    """Two-sided path on ``[-T, T]``: drifted BM ``B_t - m t`` for ``t >= 0``,
    the conditioned process at ``-t`` for ``t <= 0``; the halves are independent.
    """
    if m <= 0 or T <= 0:
        raise DomainError("need m > 0 and T > 0")
    ss = np.random.SeedSequence(seed).spawn(2)
    x = m * T + 6.1 * math.sqrt(T) + 1.0
    child_seed = int(ss[0].generate_state(1)[0])
    while True:
        neg = sample_conditioned(m, x, dt, child_seed)
        if neg.params["tau"] >= T:
            break
        x *= 2.0
    nT = int(round(T / dt))
    neg_vals = neg.values[: nT + 1]
    rng = np.random.default_rng(ss[1])
    pos = np.zeros(nT + 1)
    pos[1:] = np.cumsum(rng.standard_normal(nT) * math.sqrt(dt) - m * dt)
    times = np.arange(-nT, nT + 1) * dt
    values = np.concatenate([neg_vals[::-1], pos[1:]])
    values[nT] = 0.0
    return PathSample("beta_two_sided", dt, times, values, {"m": m, "T": T})


# --------------------------------------------------------------------------
# Cone constant
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _f_i(v):
    return v * math.exp(-v)


@numba.njit(cache=True)
def _f_i_tilde(v):
    return v if v <= 1.0 else 0.0


@numba.njit
def _drift_side(rng, fn, gamma, m, lam, dt, nsteps):
    # trapezoid of f(lam exp(gamma (B_t - m t))) over [0, nsteps*dt]
    sq = math.sqrt(dt)
    b = 0.0
    prev = fn(lam)
    acc = 0.0
    for _ in range(nsteps):
        b += sq * rng.standard_normal() - m * dt
        e = gamma * b
        cur = fn(0.0) if e < -700.0 else fn(lam * math.exp(e))
        acc += prev + cur
        prev = cur
    return 0.5 * dt * acc


@numba.njit
def _conditioned_side(rng, fn, gamma, m, lam, dt, x, cap, bridge, buf, horizon):
    # trapezoid of f(lam exp(gamma (x - B^m_s))) over the reversed passage path,
    # restricted to reversed times <= horizon
    c, theta = _first_passage(rng, m, x, dt, cap, bridge, buf)
    if c < 0:
        return -1.0
    tau = (c - 1 + theta) * dt
    last = fn(lam)
    if theta * dt >= horizon:
        return horizon * last
    # crossing step piece: nodes (c-1)*dt and tau
    prev = fn(lam * math.exp(gamma * (x - buf[c - 1])))
    acc = 0.5 * theta * dt * (prev + last)
    for i in range(c - 1, 0, -1):
        if tau - (i - 1) * dt > horizon:
            # partial final step back to reversed time `horizon`
            s_end = tau - horizon
            w = (s_end - (i - 1) * dt) / dt
            b_end = buf[i - 1] + w * (buf[i] - buf[i - 1])
            cur = fn(lam * math.exp(gamma * (x - b_end)))
            acc += 0.5 * (i * dt - s_end) * (prev + cur)
            return acc
        cur = fn(lam * math.exp(gamma * (x - buf[i - 1])))
        acc += 0.5 * dt * (prev + cur)
        prev = cur
    return acc


FUNCTIONALS = {"I": _f_i, "I_tilde": _f_i_tilde}
# f(v) is negligible (< 1e-80) for v above this value
VANISH_ABOVE = {"I": 200.0, "I_tilde": 1.0}


def cone_horizon(gamma: float, m: float, lam: float = 1.0) -> float:
    """Time horizon making the omitted tail of the drift side <= 1e-3 of the target.

    Uses the exponential tail bounds ``exp(-gamma m t/2)``, ``exp(-m^2 t/8)``
    and ``2 exp(-gamma m t/4)``; a scale ``lam > 1`` delays the integrand by
    the passage time ``log(lam)/(gamma m)``.
    """
    T = max(2 * TAIL_LOG / (gamma * m), 8 * TAIL_LOG / m**2, 4 * TAIL_LOG / (gamma * m))
    if lam > 1.0:
        T += math.log(lam) / (gamma * m)
    return T


def estimate_cone_constant(gamma: float, m: float, f="I", dt: float = 1e-3,
                           n_paths: int = 100_000, seed: int = 0, T: float | None = None,
                           lam: float = 1.0, crossing: str = "bridge") -> MCEstimate:
    """Monte Carlo for ``(1/pi) E int f(lam exp(gamma beta_t)) dt`` over the cone process.

    Parameters
    ----------
    f : {"I", "I_tilde"} or callable
        ``I(v) = v exp(-v)``, ``I_tilde(v) = v 1{v <= 1}``, or a scalar
        function of ``v > 0`` (compiled with ``numba.njit``).
    T : float, optional
        Horizon; defaults to :func:`cone_horizon`.

    Notes
    -----
    The drift side ``B_t - m t`` is integrated on ``[0, T]`` with exactly
    sampled Gaussian increments.  The conditioned side is the Williams
    reversal of the passage of ``B + m s`` to a level ``x``.  For the tagged
    functionals ``x`` is the height above which ``f(lam e^{gamma y}) < 1e-80``;
    nothing after the last passage at ``x`` can contribute, so the reversed
    path is integrated in full and no horizon error is made on that side.
    For ``I_tilde`` with ``lam >= 1`` that side vanishes identically.  A
    custom ``f`` uses ``x = m T + 6.1 sqrt(T) + 1`` and the reversed path
    restricted to ``[0, T]``.

    The target ``1/(pi gamma m)`` is attached for the tagged functionals.
    """
    if gamma <= 0 or m <= 0:
        raise DomainError("need gamma > 0 and m > 0")
    if dt <= 0 or n_paths < 2 or lam <= 0:
        raise DomainError("need dt > 0, n_paths >= 2, lam > 0")
    T = cone_horizon(gamma, m, lam) if T is None else float(T)
    if T <= 0:
        raise DomainError("T must be positive")
    nsteps = int(round(T / dt))
    if callable(f):
        fn = f if isinstance(f, numba.core.dispatcher.Dispatcher) else numba.njit(f)
        tag = getattr(f, "__name__", "custom")
        level = m * T + 6.1 * math.sqrt(T) + 1.0
        horizon = T
        target = None
    elif f in FUNCTIONALS:
        fn = FUNCTIONALS[f]
        tag = f
        level = math.log(VANISH_ABOVE[f] / lam) / gamma
        horizon = math.inf
        target = 1.0 / (math.pi * gamma * m)
    else:
        raise DomainError(f"unknown functional {f!r}; use one of {sorted(FUNCTIONALS)} or a callable")
    skip_conditioned = level <= 0.0
    cap = 0 if skip_conditioned else _level_cap(m, level, dt)
    buf = np.empty(cap + 1)
    bridge = crossing == "bridge"
    vals = np.empty(n_paths)
    # separate streams per side: changing T leaves the conditioned side untouched
    n_chunks = -(-n_paths // CHUNK)
    for c_idx, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        lo, hi = c_idx * CHUNK, min(n_paths, (c_idx + 1) * CHUNK)
        pos_ss, neg_ss = child.spawn(2)
        rng_pos, rng_neg = np.random.default_rng(pos_ss), np.random.default_rng(neg_ss)
        for i in range(lo, hi):
            s = _drift_side(rng_pos, fn, gamma, m, lam, dt, nsteps)
            if not skip_conditioned:
                c = _conditioned_side(rng_neg, fn, gamma, m, lam, dt, level, cap, bridge, buf, horizon)
                if c < 0:
                    raise CapExceededError(f"conditioned side did not reach level {level}")
                s += c
            vals[i] = s / math.pi
    params = {"gamma": gamma, "m": m, "f": tag, "lam": lam, "dt": dt, "T": T,
              "level": level, "crossing": crossing}
    return _estimate(vals, params, target)


# --------------------------------------------------------------------------
# Liouville clock
# --------------------------------------------------------------------------

def liouville_clock(path: PathSample, measure: LiouvilleMeasure, green=None) -> float:
    """Liouville time ``sum_steps dt * mass(cell(b_s)) / a^2`` along a planar path.

    Left-point rule over the path's steps; points outside the open unit
    square contribute zero, points inside use the nearest interior node.
    """
    if green is not None and green.spec.n != measure.spec.n:
        raise GridMismatchError("Green table and measure live on different grids")
    pts = np.asarray(path.values, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PreconditionError("liouville_clock needs a planar path")
    n = measure.spec.n
    a = measure.spec.spacing
    steps = np.diff(np.asarray(path.times, dtype=np.float64))
    left = pts[:-1]
    inside = np.all((left > 0.0) & (left < 1.0), axis=1)
    idx = np.clip(np.rint(left / a).astype(np.int64) - 1, 0, n - 1)
    dens = measure.mass[idx[:, 0], idx[:, 1]] / a**2
    return math.fsum(np.where(inside, dens * steps, 0.0))
