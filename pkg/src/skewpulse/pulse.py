"""Standing pulses ``D w'' + Q grad V(w) = 0`` decaying at both ends."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson, trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import null_space, schur
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .model import SkewGradientModel


class PulseError(RuntimeError):
    """Pulse computation failed."""


class ProfileFormatError(ValueError):
    """Malformed profile file."""


class FlatInhibitorError(ValueError):
    """The inhibitor derivative integral vanishes."""


@dataclass
class PulseProfile:
    grid: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    residual_norm: float = 0.0
    decay_rate: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.w = np.asarray(self.w, dtype=float).reshape(self.grid.size, -1)
        self.w_prime = np.asarray(self.w_prime, dtype=float).reshape(self.w.shape)
        if np.any(np.diff(self.grid) <= 0):
            raise ProfileFormatError("profile grid must be strictly increasing")

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @property
    def half_width(self) -> float:
        return 0.5 * (self.grid[-1] - self.grid[0])

    @property
    def spacing(self) -> float:
        return float(np.mean(np.diff(self.grid)))

    def interpolator(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.w, self.w_prime, axis=0)

    def w_at(self, x) -> np.ndarray:
        """Profile values at ``x``; zero (the rest state) outside the grid."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.n,))
        inside = (x >= self.grid[0]) & (x <= self.grid[-1])
        if np.any(inside):
            out[inside] = self.interpolator()(x[inside])
        return out


# ---------------------------------------------------------------------------
# asymptotics


def first_order_matrix(model: SkewGradientModel) -> np.ndarray:
    """Generator of ``(w, w')' `` for the pulse equation linearized at 0."""
    n = model.n
    k = np.zeros((2 * n, 2 * n))
    k[:n, n:] = np.eye(n)
    k[n:, :n] = -(model.q / model.d)[:, None] * model.B_inf
    return k


def _invariant_subspace(k: np.ndarray, unstable: bool) -> np.ndarray:
    """Orthonormal basis of the real invariant subspace with Re > 0 (or < 0)."""
    sort = "rhp" if unstable else "lhp"
    t, z, sdim = schur(k, output="real", sort=sort)
    return z[:, :sdim]


def decay_rate(model: SkewGradientModel) -> float:
    """Slowest exponential decay rate of the linearization at the rest state."""
    mu = np.linalg.eigvals(first_order_matrix(model))
    gap = float(np.min(np.abs(mu.real)))
    if gap < 1e-10:
        raise PulseError("rest state is not hyperbolic; (H1) violated?")
    return gap


def default_half_width(model: SkewGradientModel) -> float:
    return 25.0 / decay_rate(model)


# ---------------------------------------------------------------------------
# derivatives


def _derivative(w: np.ndarray, h: float) -> np.ndarray:
    """6th-order central differences, 4th-order one-sided near the ends."""
    out = np.empty_like(w)
    out[3:-3] = (
        w[6:] - 9 * w[5:-1] + 45 * w[4:-2] - 45 * w[2:-4] + 9 * w[1:-5] - w[:-6]
    ) / (60 * h)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    for i in range(3):
        out[i] = sum(c * w[i + k] for k, c in enumerate(fwd))
        out[-1 - i] = -sum(c * w[-1 - i - k] for k, c in enumerate(fwd))
    return out


_ONE_SIDED = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


# ---------------------------------------------------------------------------
# collocation


class _NumerovSystem:
    """Residual and sparse Jacobian of the discretized pulse problem.

    Unknowns are the grid values (point-major) and an unfolding parameter
    ``s`` multiplying a friction term ``s w'``; the homoclinic problem of a
    conservative system only has solutions at ``s = 0``, which makes the
    bordered system square and regular together with the phase condition.
    """

    def __init__(self, model, grid, guess, guess_prime):
        self.model = model
        self.grid = grid
        self.h = grid[1] - grid[0]
        self.npts = grid.size
        self.n = model.n
        k = first_order_matrix(model)
        unst = _invariant_subspace(k, unstable=True)
        stab = _invariant_subspace(k, unstable=False)
        if unst.shape[1] != self.n or stab.shape[1] != self.n:
            raise PulseError("rest state is not hyperbolic with an n/n splitting")
        # y(-X) must lie in the unstable subspace, y(+X) in the stable one
        self.left_rows = null_space(unst.T).T
        self.right_rows = null_space(stab.T).T
        self.guess = guess
        self.guess_prime = guess_prime

    def _split(self, x):
        n = self.n
        return x[:-1].reshape(self.npts, n), x[-1]

    def residual(self, x):
        w, s = self._split(x)
        h, dd = self.h, self.model.d
        r = self.model.reaction(w)
        interior = (
            dd * (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
            + (r[2:] + 10 * r[1:-1] + r[:-2]) / 12.0
            + s * (w[2:] - w[:-2]) / (2 * h)
        )
        wl = np.tensordot(_ONE_SIDED, w[:5], axes=(0, 0)) / h
        wr = -np.tensordot(_ONE_SIDED, w[::-1][:5], axes=(0, 0)) / h
        bc_l = self.left_rows @ np.concatenate([w[0], wl])
        bc_r = self.right_rows @ np.concatenate([w[-1], wr])
        phase = h * np.sum(self.guess_prime * (w - self.guess))
        return np.concatenate([interior.ravel(), bc_l, bc_r, [phase]])

    def jacobian(self, x):
        w, s = self._split(x)
        n, npts, h, dd = self.n, self.npts, self.h, self.model.d
        jr = self.model.q[None, :, None] * self.model.hess_v(w)  # (npts, n, n)
        rows, cols, vals = [], [], []
        i = np.arange(1, npts - 1)
        row_base = (i - 1) * n
        for c in range(n):
            for cp in range(n):
                for off, coef_r in ((-1, 1.0 / 12), (0, 10.0 / 12), (1, 1.0 / 12)):
                    v = coef_r * jr[i + off, c, cp]
                    if c == cp:
                        if off == 0:
                            v = v - 2 * dd[c] / h**2
                        else:
                            v = v + dd[c] / h**2 + off * s / (2 * h)
                    rows.append(row_base + c)
                    cols.append((i + off) * n + cp)
                    vals.append(v)
        nunk = npts * n + 1
        rows.append(np.arange((npts - 2) * n))
        cols.append(np.full((npts - 2) * n, nunk - 1))
        vals.append(((w[2:] - w[:-2]) / (2 * h)).ravel())
        r0 = (npts - 2) * n
        for side, brows in (("l", self.left_rows), ("r", self.right_rows)):
            for a in range(n):
                for c in range(n):
                    if side == "l":
                        pts = [0] + list(range(5))
                        coefs = [brows[a, c]] + list(brows[a, n + c] * _ONE_SIDED / h)
                    else:
                        pts = [npts - 1] + [npts - 1 - k for k in range(5)]
                        coefs = [brows[a, c]] + list(-brows[a, n + c] * _ONE_SIDED / h)
                    for p, v in zip(pts, coefs):
                        rows.append(np.array([r0 + a]))
                        cols.append(np.array([p * n + c]))
                        vals.append(np.array([v]))
            r0 += n
        rows.append(np.full(npts * n, r0))
        cols.append(np.arange(npts * n))
        vals.append(h * self.guess_prime.ravel())
        jac = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nunk, nunk),
        )
        return jac.tocsc()


def _uniform_grid(half_width, npoints):
    if npoints % 2 == 0:
        npoints += 1
    return np.linspace(-half_width, half_width, npoints)


def _newton(system, x0, tol, max_iter=60):
    x = x0.copy()
    f = system.residual(x)
    norm = np.max(np.abs(f))
    for it in range(max_iter):
        if norm <= tol:
            return x, norm, it
        dx = spsolve(system.jacobian(x), -f)
        t = 1.0
        while True:
            xn = x + t * dx
            fn = system.residual(xn)
            nn = np.max(np.abs(fn))
            if nn < (1 - 1e-4 * t) * norm or t < 1e-6:
                break
            t *= 0.5
        if t < 1e-6 and nn >= norm:
            raise PulseError(f"Newton stagnated with residual {norm:.3e}")
        x, f, norm = xn, fn, nn
    if norm > tol:
        raise PulseError(f"Newton did not converge; last residual {norm:.3e}")
    return x, norm, max_iter


def solve_pulse(
    model: SkewGradientModel,
    half_width: float | None = None,
    initial_guess: PulseProfile | None = None,
    tol: float = 1e-10,
    spacing: float = 0.01,
    tail_tol: float = 1e-7,
) -> PulseProfile:
    """Solve for a standing pulse by Newton iteration on a Numerov collocation.

    Boundary conditions project ``(w, w')`` at the ends onto the unstable
    (left) and stable (right) subspaces of the linearization at 0. The
    translation freedom is removed by orthogonality to the guess derivative.
    """
    if half_width is None:
        half_width = default_half_width(model)
    npts = int(round(2 * half_width / spacing)) + 1
    grid = _uniform_grid(half_width, npts)
    if initial_guess is None:
        initial_guess = builtin_seed(model, grid)
    g = initial_guess.w_at(grid)
    gp = _derivative(g, grid[1] - grid[0])
    if np.max(np.abs(g)) < 1e-8 or np.max(np.abs(gp)) < 1e-12:
        raise PulseError("trivial solution: initial guess is the rest state")

    system = _NumerovSystem(model, grid, g, gp)
    x0 = np.concatenate([g.ravel(), [0.0]])
    x, res, _ = _newton(system, x0, tol)
    w = x[:-1].reshape(grid.size, model.n)
    if np.max(np.abs(w)) < 1e-6:
        raise PulseError("trivial solution: Newton converged to the rest state")
    wp = _derivative(w, grid[1] - grid[0])
    tails = max(np.abs(w[[0, -1]]).max(), np.abs(wp[[0, -1]]).max())
    if tails > tail_tol:
        raise PulseError(f"half_width too small: tail size {tails:.2e} > {tail_tol:.1e}")
    meta = {"model": model.kind, "params": model.params, "unfolding": float(x[-1])}
    return PulseProfile(grid, w, wp, residual_norm=float(res), decay_rate=decay_rate(model), meta=meta)


# ---------------------------------------------------------------------------
# seeds


def _energy_turning_point(force, u_max=50.0):
    """First positive zero of ``F(u) = int_0^u force``, where ``force`` drives the pulse."""
    us = np.linspace(0.0, u_max, 20001)
    vals = force(us)
    prim = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(us))])
    for sgn in (1.0, -1.0):
        prim_s = prim if sgn > 0 else np.concatenate(
            [[0.0], np.cumsum(0.5 * (force(-us)[1:] + force(-us)[:-1]) * np.diff(-us))]
        )
        idx = np.nonzero((prim_s[1:-1] < 0) & (prim_s[2:] >= 0))[0]
        if idx.size:
            k = idx[0] + 1
            return sgn * float(us[k + 1])
    return None


def _sech2_seed(grid, amplitude, rate):
    return amplitude / np.cosh(0.5 * rate * grid) ** 2


def builtin_seed(model: SkewGradientModel, grid: np.ndarray) -> PulseProfile:
    """Starting profile for scalar models and the FitzHugh-Nagumo system."""
    if model.n == 1:
        dd = model.d[0]
        force = lambda u: model.reaction(np.asarray(u)[..., None])[..., 0] / dd  # noqa: E731
        amp = _energy_turning_point(force)
        if amp is None:
            raise PulseError("no pulse seed: potential has no turning point")
        u = _sech2_seed(grid, amp, decay_rate(model))[:, None]
    elif model.kind == "fhn":
        u, v = _fhn_seed(model, grid)
        u = np.stack([u, v], axis=1)
    else:
        raise PulseError("no built-in seed for this model; pass initial_guess")
    return PulseProfile(grid, u, _derivative(u, grid[1] - grid[0]))


def _fhn_seed(model, grid):
    p = model.params
    d, gamma, beta = p["d"], p["gamma"], p["beta"]

    def force(u):
        return (u * (1 - u) * (u - beta) - u / gamma) / d

    amp = _energy_turning_point(force, u_max=2.0)
    if amp is None or amp <= 0:
        raise PulseError("no pulse seed: reduced activator equation has no homoclinic")

    # exact pulse of the reduced scalar problem d u'' + f(u) - u/gamma = 0
    def grad_v(w):
        u = np.asarray(w, dtype=float)
        return u * (1 - u) * (u - beta) - u / gamma

    def hess_v(w):
        u = np.asarray(w, dtype=float)
        return (-3 * u**2 + 2 * (1 + beta) * u - beta - 1 / gamma)[..., None]

    reduced = SkewGradientModel(1, 1, np.ones(1), np.array([d]), grad_v, hess_v, kind="reduced")
    rate = math.sqrt((beta + 1.0 / gamma) / d)
    start = PulseProfile(grid, _sech2_seed(grid, amp, rate)[:, None], np.zeros((grid.size, 1)))
    start.w_prime = _derivative(start.w, grid[1] - grid[0])
    system = _NumerovSystem(reduced, grid, start.w, start.w_prime)
    x, _, _ = _newton(system, np.concatenate([start.w.ravel(), [0.0]]), 1e-10)
    u = x[:-1]
    # slave the inhibitor: v'' - gamma v - v^3 + u = 0 by damped Newton
    h = grid[1] - grid[0]
    m = grid.size
    lap = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2
    v = u / gamma
    for _ in range(50):
        f = lap @ v - gamma * v - v**3 + u
        if np.max(np.abs(f)) < 1e-12:
            break
        jac = (lap - sp.diags(gamma + 3 * v**2)).tocsc()
        v = v - spsolve(jac, f)
    return u, v


# ---------------------------------------------------------------------------
# quadratures


@dataclass
class QuadratureResult:
    value: float
    alt_value: float
    coarse_value: float
    coarse_warning: bool

    def __float__(self):
        return float(self.value)


def profile_quadrature(profile: PulseProfile, weight, component_signs) -> QuadratureResult:
    """``int <Q W w', w'> dx`` over the profile grid (Simpson).

    ``alt_value`` is the trapezoidal value and ``coarse_value`` Simpson on
    every other node; a relative disagreement above 1% between the latter
    and the main value sets ``coarse_warning``.
    """
    wgt = np.asarray(weight, dtype=float)
    if wgt.ndim == 2:
        wgt = np.diag(wgt)
    wgt = np.broadcast_to(wgt, (profile.n,))
    sig = np.broadcast_to(np.asarray(component_signs, dtype=float), (profile.n,))
    if sig.ndim == 2:  # pragma: no cover
        sig = np.diag(sig)
    integrand = (profile.w_prime**2 * (sig * wgt)).sum(axis=1)
    x = profile.grid
    val = float(simpson(integrand, x=x))
    alt = float(trapezoid(integrand, x=x))
    coarse = float(simpson(integrand[::2], x=x[::2]))
    scale = max(abs(val), float(trapezoid(np.abs(integrand), x=x)), 1e-300)
    warn = abs(coarse - val) > 0.01 * scale
    return QuadratureResult(val, alt, coarse, bool(warn))


def tau0(profile: PulseProfile) -> float:
    """Ratio ``int |u'|^2 / int |v'|^2`` for a two-component pulse."""
    if profile.n != 2:
        raise ValueError("tau0 needs a two-component (activator, inhibitor) profile")
    num = profile_quadrature(profile, [1.0, 0.0], [1.0, 1.0]).value
    den = profile_quadrature(profile, [0.0, 1.0], [1.0, 1.0]).value
    if den < 1e-14:
        raise FlatInhibitorError("flat inhibitor: int |v'|^2 vanishes")
    return num / den


def tau0_rules(profile: PulseProfile) -> tuple[float, float]:
    """``tau0`` by Simpson and by the trapezoidal rule."""
    num = profile_quadrature(profile, [1.0, 0.0], [1.0, 1.0])
    den = profile_quadrature(profile, [0.0, 1.0], [1.0, 1.0])
    if den.value < 1e-14:
        raise FlatInhibitorError("flat inhibitor: int |v'|^2 vanishes")
    return num.value / den.value, num.alt_value / den.alt_value


# ---------------------------------------------------------------------------
# files


def _meta_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def save_profile(profile: PulseProfile, path) -> None:
    """CSV with header ``x,w1..wn,dw1..dwn`` plus a JSON metadata sidecar."""
    n = profile.n
    header = ["x"] + [f"w{i + 1}" for i in range(n)] + [f"dw{i + 1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, w, wp in zip(profile.grid, profile.w, profile.w_prime):
            writer.writerow([repr(float(x))] + [repr(float(a)) for a in w] + [repr(float(a)) for a in wp])
    meta = {
        "n": n,
        "residual_norm": profile.residual_norm,
        "decay_rate": profile.decay_rate,
        **profile.meta,
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_profile(path) -> PulseProfile:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ProfileFormatError(f"{path}: line 1: empty file") from None
        if not header or header[0] != "x" or (len(header) - 1) % 2:
            raise ProfileFormatError(f"{path}: line 1: expected header x,w1..wn,dw1..dwn")
        n = (len(header) - 1) // 2
        expected = ["x"] + [f"w{i + 1}" for i in range(n)] + [f"dw{i + 1}" for i in range(n)]
        if header != expected:
            raise ProfileFormatError(f"{path}: line 1: expected header {','.join(expected)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 * n + 1:
                raise ProfileFormatError(
                    f"{path}: line {lineno}: {len(row)} columns, header declares n={n} ({2 * n + 1} columns)"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ProfileFormatError(f"{path}: line {lineno}: {exc}") from None
    if len(rows) < 5:
        raise ProfileFormatError(f"{path}: too few grid points ({len(rows)})")
    data = np.array(rows)
    bad = np.nonzero(np.diff(data[:, 0]) <= 0)[0]
    if bad.size:
        raise ProfileFormatError(f"{path}: line {bad[0] + 3}: grid is not strictly increasing")
    meta = {}
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
        if int(meta.get("n", n)) != n:
            raise ProfileFormatError(f"{_meta_path(path)}: n={meta['n']} does not match CSV n={n}")
    residual = float(meta.pop("residual_norm", 0.0))
    rate = float(meta.pop("decay_rate", float("nan")))
    meta.pop("n", None)
    return PulseProfile(data[:, 0], data[:, 1 : n + 1], data[:, n + 1 :], residual, rate, meta)
