"""Integration of slit holomorphic stochastic flows.

The flow ``dG = delta(G) dt + sigma(G) o dB`` is integrated for a set of
tracked points, either with Euler-Maruyama on the Ito form (drift
``delta + 1/2 sigma sigma'``, the default engine) or with the stochastic Heun
scheme on the Stratonovich form.  Both engines carry ``G_t'(z)`` as a
multiplicative factor and accumulate its logarithm, so ``arg G_t'`` is
continuous along every path.

Near the slit source the step is shrunk to
``dt_eff = min(dt, c_adapt |w - pole|^2)``; a point whose image comes within
``kill_radius`` of the pole is stopped and keeps its value from then on.

Each Monte Carlo path owns its own random stream, derived from the root seed
and the path index, so results do not depend on how paths are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fields as fl
from . import geometry as geo
from .errors import LiftError

ITO = "ito"
STRAT = "strat"


# ---------------------------------------------------------------------------
# random streams


class PathStreams:
    """Independent standard normal streams, one per path.

    Stream ``p`` is a Philox generator keyed by ``SeedSequence(seed,
    spawn_key=(p,))``.  Draws are buffered per path in blocks of ``block``.
    """

    def __init__(self, seed: int, n_paths: int, block: int = 256, offset: int = 0):
        self.seed = int(seed)
        self.block = block
        self.gens = [
            np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(offset + p,))))
            for p in range(n_paths)
        ]
        self.buf = np.empty((n_paths, block))
        for p, g in enumerate(self.gens):
            self.buf[p] = g.standard_normal(block)
        self.ptr = np.zeros(n_paths, dtype=np.int64)

    def draw(self, idx: np.ndarray) -> np.ndarray:
        out = self.buf[idx, self.ptr[idx]]
        self.ptr[idx] += 1
        full = idx[self.ptr[idx] >= self.block]
        for p in full:
            self.buf[p] = self.gens[p].standard_normal(self.block)
            self.ptr[p] = 0
        return out


# ---------------------------------------------------------------------------
# driving functions


@dataclass
class DrivingPath:
    """Driving data of a run.

    ``kind`` is ``"brownian"`` (``B`` a standard Brownian motion and the
    driving function ``u_t = sqrt(kappa) B_t``) or ``"deterministic"`` (a
    function ``b(t)`` multiplying ``sigma``; ``u = sqrt(kappa) b``).
    """

    kind: str = "brownian"
    kappa: float = 4.0
    seed: int = 0
    func: Callable[[float], float] | None = None
    times: np.ndarray | None = None
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("brownian", "deterministic"):
            raise ValueError("driving kind must be 'brownian' or 'deterministic'")
        if self.kind == "deterministic" and self.func is None:
            self.func = lambda t: 0.0


def brownian_driving(kappa: float, seed: int, times) -> DrivingPath:
    """Sample ``u_t = sqrt(kappa) B_t`` on a grid from the stream of path 0."""
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(0,))))
    dB = rng.standard_normal(len(times) - 1) * np.sqrt(np.diff(times))
    B = np.concatenate([[0.0], np.cumsum(dB)])
    return DrivingPath("brownian", kappa, seed, None, times, math.sqrt(kappa) * B)


# ---------------------------------------------------------------------------
# Moebius flows


def mobius_flow(sigma: fl.RationalField, s: float) -> np.ndarray:
    """``H_s[sigma] = exp(s A)`` as a real 2x2 matrix (closed-form exponential)."""
    A = fl.mobius_generator(sigma)
    disc = A[0, 0] ** 2 + A[0, 1] * A[1, 0]
    r = np.sqrt(complex(disc))
    if abs(r * s) < 1e-8:
        c, sh = 1.0 + 0.5 * disc * s * s, s * (1 + disc * s * s / 6)
    else:
        c, sh = np.cosh(r * s), np.sinh(r * s) / r
    return np.real(c * np.eye(2) + sh * A)


# ---------------------------------------------------------------------------
# fields on a chart


class FlowFields:
    """Numeric evaluators of ``delta, sigma`` and derivatives in one chart."""

    def __init__(self, pair: fl.SlitFieldPair, chart: str, delta=None, sigma=None):
        self.pair = pair
        self.chart = geo.chart_id(chart)
        self.delta = fl.ChartField(delta or pair.delta, chart)
        self.sigma = fl.ChartField(sigma or pair.sigma, chart)
        self.pole = geo.source_point(chart)

    def inverted(self) -> "FlowFields":
        """The same fields in the half-plane coordinate ``u = -1/w``."""
        m = np.array([[0, -1], [1, 0]])
        return FlowFields(self.pair, geo.HALFPLANE, self.pair.delta.pushforward(m), self.pair.sigma.pushforward(m))

    def stiffness(self, w):
        """``|sigma'(w)|^2 + |delta'(w)|``, used to pick the coordinate of a step."""
        return np.abs(self.sigma.derivatives(w, 1)[1]) ** 2 + np.abs(self.delta.derivatives(w, 1)[1])

    def ito(self, w):
        d0, d1 = self.delta.derivatives(w, 1)
        s0, s1, s2 = self.sigma.derivatives(w, 2)
        drift = d0 + 0.5 * s0 * s1
        ddrift = d1 + 0.5 * (s1 * s1 + s0 * s2)
        return drift, s0, ddrift, s1

    def strat(self, w):
        d0, d1 = self.delta.derivatives(w, 1)
        s0, s1 = self.sigma.derivatives(w, 1)
        return d0, s0, d1, s1


@dataclass
class FlowState:
    """Half-plane images ``w`` and log-derivatives ``L = log G'`` of tracked points.

    ``offset`` is ``log T'(z0)`` of the chart map at the starting points and
    ``branch`` the winding index used when reporting in the logarithmic chart.
    """

    w: np.ndarray
    logd: np.ndarray
    alive: np.ndarray
    death_time: np.ndarray
    t: np.ndarray
    B: np.ndarray
    offset: np.ndarray
    branch: np.ndarray

    @property
    def d(self):
        return np.exp(self.logd)

    def copy(self) -> "FlowState":
        return FlowState(*(np.array(getattr(self, f), copy=True) for f in _STATE_FIELDS))


_STATE_FIELDS = ("w", "logd", "alive", "death_time", "t", "B", "offset", "branch")


def initial_state(points, n_paths: int = 1, chart: str = geo.HALFPLANE) -> FlowState:
    """State at time 0 for ``points`` given in ``chart`` coordinates."""
    pts = np.asarray(points, dtype=complex).ravel()
    zh, dz = geo.to_halfplane(chart, pts, 1)
    branch = np.zeros(pts.shape, dtype=np.int64)
    if chart == geo.LOG:
        branch = np.round((pts.real - 2 * np.arctan(zh).real) / (2 * np.pi)).astype(np.int64)
    P = pts.size
    w = np.repeat(zh.reshape(1, -1), n_paths, axis=0)
    return FlowState(
        w,
        np.zeros_like(w),
        np.ones((n_paths, P), dtype=bool),
        np.full((n_paths, P), np.nan),
        np.zeros(n_paths),
        np.zeros(n_paths),
        np.log(dz),
        np.repeat(branch.reshape(1, -1), n_paths, axis=0),
    )


def _log_dchart(chart: str, w, branch):
    """``log`` of the derivative of the half-plane-to-chart map, continuous on H."""
    if chart == geo.DISK:
        return np.log(-2j) - 2 * np.log(1j + w)
    if chart == geo.STRIP:
        return np.log(2.0) - np.log(1 - w) - np.log(1 + w)
    if chart == geo.LOG:
        return np.log(2.0) - np.log(1 + 1j * w) - np.log(1 - 1j * w) - 2j * np.pi * branch
    return np.zeros_like(w)


def chart_values(chart: str, w, logd, offset, branch):
    """Transport half-plane flow data ``(w, log G')`` to ``chart``."""
    if chart == geo.HALFPLANE:
        return w, logd
    wc = geo.from_halfplane(chart, w, 0, 0)[0]
    if chart == geo.LOG:
        wc = wc + 2 * np.pi * branch
    return wc, _log_dchart(chart, w, branch) + logd + offset


def _cut_crossings(w_old, w_new):
    """Change of the logarithmic-chart branch when a step crosses ``i [1, inf)``."""
    mid = 0.5 * (w_old.imag + w_new.imag)
    left_to_right = (w_old.real < 0) & (w_new.real >= 0) & (mid > 1)
    right_to_left = (w_old.real >= 0) & (w_new.real < 0) & (mid > 1)
    return right_to_left.astype(np.int64) - left_to_right.astype(np.int64)


def step_ito(ff: FlowFields, w, logd, dt, dB):
    """Euler-Maruyama step on the Ito form for ``w`` and ``log G'``."""
    dt = np.asarray(dt)
    dB = np.asarray(dB)
    a, b, da, db = ff.ito(w)
    w_new = w + a * dt + b * dB
    factor = 1 + da * dt + db * dB
    return w_new, logd + np.log(factor)


def step_strat(ff: FlowFields, w, logd, dt, dB):
    """Stochastic Heun step on the Stratonovich form."""
    dt = np.asarray(dt)
    dB = np.asarray(dB)
    a0, b0, da0, db0 = ff.strat(w)
    w_pred = w + a0 * dt + b0 * dB
    a1, b1, da1, db1 = ff.strat(w_pred)
    w_new = w + 0.5 * ((a0 + a1) * dt + (b0 + b1) * dB)
    f0 = da0 * dt + db0 * dB
    f1 = da1 * dt + db1 * dB
    factor = 1 + 0.5 * (f0 + f1 * (1 + f0))
    return w_new, logd + np.log(factor)


def step_mixed(stepper, ff: FlowFields, ffi: FlowFields, w, logd, dt, dB):
    """One step in the half-plane chart, switching to ``u = -1/w`` where that is less stiff.

    Near infinity a quadratic part of the fields makes explicit steps in
    ``w`` unstable; in ``u`` the same region is a neighborhood of ``0`` where
    the fields are polynomial.  A point with ``|w| > 1`` is stepped in ``u``
    when ``|sigma'|^2 + |delta'|`` is smaller there.  ``log G'`` is carried back exactly with
    ``log G'^H = log G'^u + 2 log w``.
    """
    inv = np.abs(w) > 1
    if inv.any():
        inv[inv] = ffi.stiffness(-1 / w[inv]) < ff.stiffness(w[inv])
    if not inv.any():
        return stepper(ff, w, logd, dt, dB)
    dt = np.broadcast_to(dt, w.shape)
    dB = np.broadcast_to(dB, w.shape)
    w_new = np.empty_like(w)
    l_new = np.empty_like(logd)
    n = ~inv
    if n.any():
        w_new[n], l_new[n] = stepper(ff, w[n], logd[n], dt[n], dB[n])
    wi = w[inv]
    with np.errstate(divide="ignore", invalid="ignore"):
        u_new, lu = stepper(ffi, -1 / wi, np.zeros_like(wi), dt[inv], dB[inv])
        wn = -1 / u_new
        w_new[inv] = wn
        l_new[inv] = logd[inv] + lu + 2 * (np.log(wn) - np.log(wi))
    return w_new, l_new


@dataclass
class LoewnerRun:
    """Result of :func:`run`.

    Recorded arrays ``w``, ``logd`` (shape ``(n_times, N, P)``), ``alive`` and
    ``B`` (shape ``(n_times, N)``) are in the run's chart; ``final`` is the
    half-plane state, usable to continue the run.
    """

    pair: fl.SlitFieldPair
    chart: str
    points: np.ndarray
    times: np.ndarray
    w: np.ndarray | None
    logd: np.ndarray | None
    alive: np.ndarray | None
    B: np.ndarray | None
    final: FlowState = field(repr=False, default=None)
    n_steps: int = 0

    @property
    def death_time(self):
        return self.final.death_time

    def final_chart(self):
        """Final ``(G_t(z), log G_t'(z))`` in the run's chart."""
        f = self.final
        return chart_values(self.chart, f.w, f.logd, f.offset, f.branch)

    def g(self):
        """Half-plane ``g_t = H_{B_t}^{-1} o G_t`` at the final time, per path and point."""
        out = np.empty_like(self.final.w)
        for p, b in enumerate(self.final.B):
            m = geo.mobius_inverse(mobius_flow(self.pair.sigma, b))
            out[p] = geo.mobius_apply(m, self.final.w[p])
        return out


def run(
    pair: fl.SlitFieldPair,
    chart: str,
    points,
    t_max: float,
    dt: float,
    driving: DrivingPath | None = None,
    n_paths: int = 1,
    scheme: str = ITO,
    kill_radius: float = 1e-3,
    c_adapt: float = 0.05,
    record_dt: float | None = None,
    state: FlowState | None = None,
    path_offset: int = 0,
    max_iter: int = 10_000_000,
) -> LoewnerRun:
    """Integrate the flow for ``n_paths`` independent paths.

    Points are given in ``chart``; the integration itself always runs in the
    half-plane chart, where the slit source is ``0`` and the kill radius is
    measured, and results are transported back.  ``record_dt`` enables
    recording on a regular grid (steps are clipped to land on it).  ``state``
    continues a previous run (the Markov restart); ``path_offset`` shifts the
    stream indices so that a continuation uses fresh increments.
    """
    geo.chart_id(chart)
    if t_max < 0 or dt <= 0:
        raise ValueError("need t_max >= 0 and dt > 0")
    if scheme not in (ITO, STRAT):
        raise ValueError(f"scheme must be {ITO!r} or {STRAT!r}")
    driving = driving or DrivingPath("brownian", pair.kappa)
    ff = FlowFields(pair, geo.HALFPLANE)
    ffi = ff.inverted()
    pts = np.asarray(points, dtype=complex).ravel()
    if state is None:
        geo.check_interior(chart, pts)
        state = initial_state(pts, n_paths, chart)
    else:
        state = state.copy()
    n_paths = state.w.shape[0]
    t0 = float(state.t.max()) if n_paths else 0.0
    t_end = t0 + t_max
    stepper = step_ito if scheme == ITO else step_strat
    streams = PathStreams(driving.seed, n_paths, offset=path_offset) if driving.kind == "brownian" else None
    if record_dt:
        grid = np.arange(t0, t_end + 0.5 * record_dt, record_dt)
        grid[-1] = min(grid[-1], t_end)
        if grid[-1] < t_end - 1e-14:
            grid = np.append(grid, t_end)
    else:
        grid = np.array([t0, t_end])
    rec = record_dt is not None
    records = {"w": [], "logd": [], "alive": [], "B": []}

    def snapshot():
        wc, lc = chart_values(chart, state.w, state.logd, state.offset, state.branch)
        records["w"].append(np.array(wc, copy=True))
        records["logd"].append(np.array(lc, copy=True))
        records["alive"].append(state.alive.copy())
        records["B"].append(state.B.copy())

    if rec:
        snapshot()
    n_steps = 0
    for target in grid[1:]:
        for _ in range(max_iter):
            active = np.nonzero((state.t < target - 1e-15) & state.alive.any(axis=1))[0]
            if active.size == 0:
                break
            sel = slice(None) if active.size == n_paths else active
            w = state.w[sel]
            al = state.alive[sel]
            dist2 = np.where(al, np.abs(w) ** 2, np.inf).min(axis=1)
            h = np.minimum(np.minimum(dt, c_adapt * dist2), target - state.t[sel])
            if streams is not None:
                dB = streams.draw(active) * np.sqrt(h)
            else:
                tt = state.t[sel]
                dB = np.array([driving.func(a + b) - driving.func(a) for a, b in zip(tt, h)])
            w_new, ld_new = step_mixed(stepper, ff, ffi, w, state.logd[sel], h[:, None], dB[:, None])
            # frozen points keep their value
            w_new = np.where(al, w_new, w)
            ld_new = np.where(al, ld_new, state.logd[sel])
            t_new = state.t[sel] + h
            bad = ~(np.isfinite(w_new) & np.isfinite(ld_new))
            dead = al & (bad | (w_new.imag <= 0) | (np.abs(w_new) < kill_radius))
            w_new = np.where(bad, w, w_new)
            ld_new = np.where(bad, state.logd[sel], ld_new)
            if chart == geo.LOG:
                state.branch[sel] = state.branch[sel] + np.where(al & ~dead, _cut_crossings(w, w_new), 0)
            dt_mat = np.broadcast_to(t_new[:, None], dead.shape)
            state.death_time[sel] = np.where(dead, dt_mat, state.death_time[sel])
            state.alive[sel] = al & ~dead
            state.w[sel] = np.where(dead & ~bad & (w_new.imag <= 0), w, w_new)
            state.logd[sel] = ld_new
            state.t[sel] = t_new
            state.B[sel] = state.B[sel] + dB
            n_steps += 1
        # paths whose points all died jump to the target time
        state.t = np.maximum(state.t, target)
        if rec:
            snapshot()
    arr = {k: (np.array(v) if rec else None) for k, v in records.items()}
    return LoewnerRun(pair, chart, pts, grid, arr["w"], arr["logd"], arr["alive"], arr["B"], state, n_steps)


def _run_chunk(args):
    kw, offset, count = args
    return run(**kw, n_paths=count, path_offset=offset)


def run_parallel(workers: int = 1, chunk: int | None = None, **kw) -> LoewnerRun:
    """:func:`run` split over path chunks, optionally in worker processes.

    Every path draws from its own stream, so the result is the same for any
    ``workers`` and ``chunk`` as for a single call of :func:`run`.
    """
    from concurrent.futures import ProcessPoolExecutor

    n_paths = kw.pop("n_paths", 1)
    base = kw.pop("path_offset", 0)
    if kw.get("state") is not None:
        raise ValueError("continuation runs are not split")
    chunk = chunk or max(1, -(-n_paths // max(workers, 1)))
    jobs = [(kw, base + s, min(chunk, n_paths - s)) for s in range(0, n_paths, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return merge_runs(parts)


def merge_runs(parts) -> LoewnerRun:
    """Concatenate runs over disjoint path sets (same grid and points)."""
    first = parts[0]
    if len(parts) == 1:
        return first

    def cat(name, axis):
        arrs = [getattr(p, name) for p in parts]
        return None if arrs[0] is None else np.concatenate(arrs, axis=axis)

    fin = FlowState(*(np.concatenate([getattr(p.final, f) for p in parts], axis=0) if f != "offset"
                      else first.final.offset for f in _STATE_FIELDS))
    return LoewnerRun(first.pair, first.chart, first.points, first.times, cat("w", 1), cat("logd", 1),
                      cat("alive", 1), cat("B", 1), fin, sum(p.n_steps for p in parts))


# ---------------------------------------------------------------------------
# trace by backward lifting


def trace(
    pair: fl.SlitFieldPair,
    t_grid,
    dB=None,
    eps: float = 1e-4,
    c_adapt: float = 0.05,
    driving: Callable[[float], float] | None = None,
) -> np.ndarray:
    """Approximate the slit tip ``gamma(t) = G_t^{-1}(i eps)`` for each grid time.

    The flow is integrated backward from ``t`` to ``0`` in the half-plane
    chart with the driving taken piecewise linear between grid times
    (increments ``dB``; zero or from ``driving`` when omitted).  All tips are
    transported together, one grid interval at a time, with adaptive RK4
    substeps.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    n = len(t_grid)
    if dB is None:
        if driving is None:
            dB = np.zeros(n - 1)
        else:
            dB = np.array([driving(b) - driving(a) for a, b in zip(t_grid[:-1], t_grid[1:])])
    dB = np.asarray(dB, dtype=float)
    ff = FlowFields(pair, geo.HALFPLANE)
    tips = np.full(n, 1j * eps, dtype=complex)
    tips[0] = 0.0
    for k in range(n - 2, -1, -1):
        idx = np.arange(k + 1, n)
        span = t_grid[k + 1] - t_grid[k]
        speed = dB[k] / span
        z = tips[idx]
        remaining = np.full(idx.size, span)

        def vel(x):
            return ff.delta(x) + ff.sigma(x) * speed

        while True:
            todo = remaining > 1e-15
            if not todo.any():
                break
            x = z[todo]
            v = vel(x)
            h = np.minimum.reduce([
                remaining[todo],
                c_adapt * np.abs(x) ** 2,
                c_adapt * np.abs(x) / np.maximum(np.abs(ff.sigma(x) * speed), 1e-300),
            ])
            h = -h  # backward in time
            k1 = v
            k2 = vel(x + 0.5 * h * k1)
            k3 = vel(x + 0.5 * h * k2)
            k4 = vel(x + h * k3)
            x_new = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if np.any(~np.isfinite(x_new)) or np.any(x_new.imag < -1e-12):
                raise LiftError("backward integration left the half-plane")
            z[todo] = x_new
            remaining[todo] += h
        tips[idx] = z
    return tips


# ---------------------------------------------------------------------------
# deterministic time change of the chordal flow


def timechange_case2(xi: float, t_tilde):
    """``lambda(t) = (1 - exp(-4 xi t)) / (4 xi)`` and the scale ``exp(2 xi t)``."""
    if xi == 0:
        raise ValueError("xi must be nonzero")
    t = np.asarray(t_tilde, dtype=float)
    lam = -np.expm1(-4 * xi * t) / (4 * xi)
    scale = np.exp(2 * xi * t)
    if lam.ndim == 0:
        return float(lam), float(scale)
    return lam, scale


def case2_pathwise_deviation(
    kappa: float, xi: float, z: complex, t_tilde: float, dt: float, seed: int = 0
) -> float:
    """Max over the grid of ``|G~_t(z) - e^{2 xi t} G_{lambda(t)}(z)|``.

    The row-two flow is driven by increments ``dB~`` on a uniform grid in
    ``t``; the chordal flow runs on the image grid ``lambda(t_k)`` with the
    same Gaussian variables rescaled to the interval lengths, which to first
    order is ``dB_lambda = lambda'(t)^{1/2} dB~``.
    """
    n = int(round(t_tilde / dt))
    tt = np.linspace(0.0, t_tilde, n + 1)
    lam, scale = timechange_case2(xi, tt)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    xi_n = rng.standard_normal(n)
    r = math.sqrt(kappa)
    wt = complex(z)
    wc = complex(z)
    dev = 0.0
    dlam = np.diff(lam)
    sq_dt = math.sqrt(dt)
    sq_dl = np.sqrt(dlam)
    for k in range(n):
        wt = wt + (2 / wt + 2 * xi * wt) * dt - r * sq_dt * xi_n[k]
        wc = wc + (2 / wc) * dlam[k] - r * sq_dl[k] * xi_n[k]
        dev = max(dev, abs(wt - scale[k + 1] * wc))
    return dev
