"""Time integration of ``M w_t = D w_xx + Q grad V(w)`` and growth-rate fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from . import kernels
from .model import SkewGradientModel
from .pulse import PulseProfile

BLOWUP = 1e6


class EvolutionError(ValueError):
    """Invalid time-stepping request."""


@dataclass
class EvolutionRun:
    dt: float
    t_final: float
    grid: np.ndarray
    times: np.ndarray
    fields: np.ndarray  # (snapshots, points, n)
    reference: np.ndarray
    blew_up: bool = False
    growth_rate: float = float("nan")
    r_squared: float = float("nan")
    low_confidence: bool = True
    drift: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "t_reached": float(self.times[-1]),
            "snapshots": int(self.times.size),
            "blew_up": self.blew_up,
            "growth_rate": self.growth_rate,
            "r_squared": self.r_squared,
            "low_confidence": self.low_confidence,
            "drift": self.drift,
            **self.meta,
        }


def imex_dt_limit(model: SkewGradientModel, field_: np.ndarray) -> float:
    """Largest ``dt`` for which the explicit reaction step is safely stable."""
    b = model.q[:, None] * model.hess_v(np.concatenate([field_, np.zeros((1, model.n))]))
    rho = float(np.max(np.linalg.norm(b, ord=2, axis=(1, 2))))
    return 0.5 * float(np.min(model.m)) / max(rho, 1e-12)


def smooth_perturbation(grid: np.ndarray, n: int, amplitude: float, seed: int = 0, bumps: int = 6) -> np.ndarray:
    """Sum of random Gaussian bumps in the middle half of the grid, scaled to sup norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    span = grid[-1] - grid[0]
    mid = 0.5 * (grid[0] + grid[-1])
    out = np.zeros((grid.size, n))
    for _ in range(bumps):
        c = mid + rng.uniform(-0.1, 0.1) * span
        width = rng.uniform(0.5, 2.0)
        out += rng.normal(size=n)[None, :] * np.exp(-(((grid - c) / width) ** 2))[:, None]
    return amplitude * out / np.max(np.abs(out))


def _peak(grid, f):
    k = int(np.argmax(np.abs(f)))
    if 0 < k < grid.size - 1:
        a, b, c = np.abs(f[k - 1 : k + 2])
        denom = a - 2 * b + c
        if denom != 0:
            return grid[k] + 0.5 * (a - c) / denom * (grid[1] - grid[0])
    return grid[k]


def evolve(
    model: SkewGradientModel,
    initial,
    dt: float,
    t_final: float,
    grid: np.ndarray | None = None,
    reference=None,
    snapshots=200,
    window=None,
) -> EvolutionRun:
    """Integrate from ``initial`` with Neumann ends.

    Diffusion is Crank-Nicolson and the reaction two-step Adams-Bashforth,
    both in the compact (Numerov) mass form ``(1 + delta^2/12)``, so a pulse
    from ``solve_pulse`` is a discrete steady state up to the boundary rows.
    ``snapshots`` is a count or an array of output times. ``reference``
    (default: ``initial``) is the pulse used for the growth-rate fit.
    """
    if isinstance(initial, PulseProfile):
        grid = initial.grid
        w = np.array(initial.w, dtype=float)
    else:
        if grid is None:
            raise EvolutionError("a grid is needed when the initial field is an array")
        w = np.array(initial, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape != (grid.size, model.n):
        raise EvolutionError(f"initial field has shape {w.shape}, expected {(grid.size, model.n)}")
    if dt <= 0 or t_final <= 0:
        raise EvolutionError("dt and t_final must be positive")
    limit = imex_dt_limit(model, w)
    if dt > limit:
        raise EvolutionError(f"dt={dt:.3g} exceeds the IMEX stability bound {limit:.3g}")
    ref = w.copy() if reference is None else (
        reference.w_at(grid) if isinstance(reference, PulseProfile) else np.asarray(reference, dtype=float)
    )
    h = grid[1] - grid[0]
    npts = grid.size
    nsteps = int(np.ceil(t_final / dt - 1e-12))
    if np.isscalar(snapshots):
        out_times = np.linspace(0.0, nsteps * dt, int(snapshots) + 1)
    else:
        out_times = np.sort(np.asarray(snapshots, dtype=float))
    out_steps = np.unique(np.clip(np.round(out_times / dt).astype(int), 0, nsteps))

    # second difference and compact mass with ghost-point Neumann rows
    lo = np.ones(npts)
    up = np.ones(npts)
    up[0] = 2.0
    lo[-1] = 2.0
    mid = -2.0 * np.ones(npts)

    def apply_tri(a, b, c, f):
        g = b[:, None] * f
        g[1:] += a[1:, None] * f[:-1]
        g[:-1] += c[:-1, None] * f[1:]
        return g

    mass = (lo / 12.0, 1.0 + mid / 12.0, up / 12.0)
    coef = 0.5 * dt * model.d / h**2
    lhs = []
    rhs_ops = []
    for k in range(model.n):
        mk = model.m[k]
        lhs.append((mk * mass[0] - coef[k] * lo, mk * mass[1] - coef[k] * mid, mk * mass[2] - coef[k] * up))
        rhs_ops.append((mk * mass[0] + coef[k] * lo, mk * mass[1] + coef[k] * mid, mk * mass[2] + coef[k] * up))

    times, fields = [], []
    r_prev = None
    blew_up = False
    step = 0
    if step in out_steps:
        times.append(0.0)
        fields.append(w.copy())
    while step < nsteps:
        r = apply_tri(*mass, model.reaction(w))
        extrap = r if r_prev is None else 1.5 * r - 0.5 * r_prev
        new = np.empty_like(w)
        for k in range(model.n):
            rhs = apply_tri(*rhs_ops[k], w[:, k : k + 1])[:, 0] + dt * extrap[:, k]
            new[:, k] = kernels.tridiagonal_solve(*lhs[k], rhs)
        r_prev = r
        w = new
        step += 1
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > BLOWUP:
            blew_up = True
            break
        if step in out_steps:
            times.append(step * dt)
            fields.append(w.copy())
    if blew_up and (not times or times[-1] != step * dt):
        times.append(step * dt)
        fields.append(np.where(np.isfinite(w), w, np.nan))
    run = EvolutionRun(
        dt=float(dt),
        t_final=float(t_final),
        grid=grid,
        times=np.array(times),
        fields=np.array(fields),
        reference=ref,
        blew_up=blew_up,
    )
    comp = int(np.argmax(np.max(np.abs(ref), axis=0)))
    good = np.all(np.isfinite(run.fields[-1]))
    run.drift = float(_peak(grid, run.fields[-1][:, comp]) - _peak(grid, run.fields[0][:, comp])) if good else float("nan")
    try:
        run.growth_rate, run.r_squared, run.low_confidence = growth_rate_fit(run, window, flag=True)
    except EvolutionError as exc:
        run.meta["fit_error"] = str(exc)
    return run


def translation_distance(grid: np.ndarray, reference: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """``min_s |w - reference(. - s)|_2`` and the minimizing shift.

    The best grid shift is found first, then refined continuously by a
    bounded scalar minimization over one cell on either side.
    """
    h = grid[1] - grid[0]
    spline = CubicSpline(grid, reference, axis=0)
    lo, hi = grid[0], grid[-1]

    def dist(s):
        shifted = spline(np.clip(grid - s, lo, hi))
        return float(np.sqrt(h * np.sum((w - shifted) ** 2)))

    comp = int(np.argmax(np.max(np.abs(reference), axis=0)))
    guess = _peak(grid, w[:, comp]) - _peak(grid, reference[:, comp])
    k0 = int(round(guess / h))
    ks = np.arange(k0 - 3, k0 + 4)
    vals = [dist(k * h) for k in ks]
    kb = ks[int(np.argmin(vals))]
    res = minimize_scalar(dist, bounds=((kb - 1) * h, (kb + 1) * h), method="bounded", options={"xatol": 1e-10 * max(h, 1.0)})
    return float(res.fun), float(res.x)


def growth_rate_fit(run: EvolutionRun, window=None, flag: bool = False):
    """Least-squares slope of ``log distance`` (modulo translation) versus time.

    ``window = (t0, t1)``; by default from a quarter to all of the time at
    which the distance first exceeds 1% of the reference amplitude, or the
    second half of the run if it never does. Returns
    ``(rate, r_squared)``, plus the low-confidence flag when ``flag`` is set
    (non-monotone log distance, as for oscillatory modes).
    """
    t = run.times
    ok = np.all(np.isfinite(run.fields.reshape(t.size, -1)), axis=1)
    t = t[ok]
    dist = np.array([translation_distance(run.grid, run.reference, f)[0] for f in run.fields[ok]])
    if window is None:
        amp = np.max(np.abs(run.reference))
        large = np.nonzero(dist > 1e-2 * amp)[0]
        if large.size and t[large[0]] > 0:
            window = (0.25 * t[large[0]], t[large[0]])
        else:
            # decaying or neutral run: skip the transient, which can be long
            # when L is far from normal
            window = (0.5 * t[-1], t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12) & (dist > 0)
    if np.count_nonzero(sel) < 10:
        raise EvolutionError(f"need at least 10 snapshots in the window, got {np.count_nonzero(sel)}")
    ts, ld = t[sel], np.log(dist[sel])
    slope, icpt = np.polyfit(ts, ld, 1)
    resid = ld - (slope * ts + icpt)
    sst = np.sum((ld - ld.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / sst if sst > 0 else 1.0
    steps = np.diff(ld)
    low = bool(np.any(steps * np.sign(slope) < -1e-9) or r2 < 0.99)
    if flag:
        return float(slope), float(r2), low
    return float(slope), float(r2)
