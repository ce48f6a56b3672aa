"""Lagrangian-Grassmannian numerics.

Convention: ``J = [[0, -I], [I, 0]]`` and ``omega(u, v) = <J u, v>``.
Subspaces are carried as frames (2n x n matrices); whenever a frame is
orthonormal and Lagrangian, ``J Z`` is an orthonormal basis of its
orthogonal complement, so the sines of the principal angles between two
Lagrangians ``span Z1`` and ``span Z2`` are the singular values of
``(J Z2)^T Z1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq, minimize_scalar


class SymplecticError(ValueError):
    """Invalid frame or ill-posed index computation."""


class IrregularCrossingError(SymplecticError):
    """A crossing form is degenerate."""


def J(n: int) -> np.ndarray:
    out = np.zeros((2 * n, 2 * n))
    out[:n, n:] = -np.eye(n)
    out[n:, :n] = np.eye(n)
    return out


def apply_J(z: np.ndarray) -> np.ndarray:
    """``J z`` for vectors or frames without forming J."""
    n = z.shape[0] // 2
    return np.concatenate([-z[n:], z[:n]], axis=0)


def symplectic_form(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size % 2:
        raise SymplecticError(f"symplectic_form needs two vectors of equal even length, got {u.shape} and {v.shape}")
    return float(apply_J(u) @ v)


def orthonormalize(z: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(z)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


@dataclass
class LagrangianFrame:
    columns: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.columns, dtype=float))
        if z.shape[0] == 1 and z.shape[1] % 2 == 0:
            z = z.T
        if z.shape[0] != 2 * z.shape[1]:
            raise SymplecticError(f"a Lagrangian frame is 2n x n, got {z.shape}")
        s = np.linalg.svd(z, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise SymplecticError("frame is rank deficient")
        self.columns = z

    @property
    def dim_n(self) -> int:
        return self.columns.shape[1]

    def normalize(self) -> "LagrangianFrame":
        return LagrangianFrame(orthonormalize(self.columns))

    @property
    def isotropy_defect(self) -> float:
        z = orthonormalize(self.columns)
        return float(np.max(np.abs(z.T @ apply_J(z))))

    def is_lagrangian(self, tol: float = 1e-10) -> bool:
        return self.isotropy_defect <= tol


FrameLike = Union[LagrangianFrame, np.ndarray]


def _cols(frame: FrameLike) -> np.ndarray:
    if isinstance(frame, LagrangianFrame):
        return frame.columns
    return np.asarray(frame, dtype=float)


def lambda_R(n: int, j: int) -> LagrangianFrame:
    """``{(p, q): p in V+(Q), q in V-(Q)}`` for ``Q = diag(I_j, -I_{n-j})``."""
    if not 1 <= j <= n:
        raise SymplecticError(f"need 1 <= j <= n, got j={j}, n={n}")
    z = np.zeros((2 * n, n))
    for i in range(j):
        z[i, i] = 1.0
    for i in range(j, n):
        z[n + i, i] = 1.0
    return LagrangianFrame(z)


def random_lagrangian(n: int, rng: np.random.Generator) -> LagrangianFrame:
    """Uniformly distributed Lagrangian: real and imaginary part of a random unitary."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    u, _ = np.linalg.qr(a)
    return LagrangianFrame(np.vstack([u.real, u.imag]))


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """``exp(J S)`` for a random symmetric ``S``."""
    s = rng.standard_normal((2 * n, 2 * n)) * scale
    return expm(J(n) @ (0.5 * (s + s.T)))


def principal_sines(l1: FrameLike, l2: FrameLike) -> np.ndarray:
    """Sines of the principal angles, ascending."""
    z1 = orthonormalize(_cols(l1))
    z2 = orthonormalize(_cols(l2))
    return np.sort(np.linalg.svd(apply_J(z2).T @ z1, compute_uv=False))


def _check_tol(tol):
    if not 0 < tol < 0.1:
        raise SymplecticError(f"tolerance must lie in (0, 0.1), got {tol}")


def intersection_dim(l1: FrameLike, l2: FrameLike, tol: float = 1e-8) -> int:
    _check_tol(tol)
    return int(np.sum(principal_sines(l1, l2) < tol))


def intersection_basis(l1: FrameLike, l2: FrameLike, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (2n x k) of the numerical intersection, taken inside ``l1``."""
    z1 = orthonormalize(_cols(l1))
    z2 = orthonormalize(_cols(l2))
    _, s, vt = np.linalg.svd(apply_J(z2).T @ z1)
    return z1 @ vt[s < tol].T


@dataclass
class CrossingRecord:
    location: float
    intersection_dim: int
    form_eigenvalues: list = field(default_factory=list)
    signature: int = 0

    def to_dict(self) -> dict:
        return {
            "location": float(self.location),
            "intersection_dim": int(self.intersection_dim),
            "form_eigenvalues": [float(e) for e in self.form_eigenvalues],
            "signature": int(self.signature),
        }


def _record(location, form, degeneracy_tol):
    form = 0.5 * (form + form.T)
    ev = np.linalg.eigvalsh(form) if form.size else np.zeros(0)
    sig = int(np.sum(ev > degeneracy_tol) - np.sum(ev < -degeneracy_tol))
    return CrossingRecord(float(location), int(ev.size), ev.tolist(), sig)


def crossing_form_flow(
    A: np.ndarray, frame: FrameLike, V: FrameLike, tol: float = 1e-8, location: float = 0.0
) -> CrossingRecord:
    """Crossing form ``xi -> <A xi, xi>`` of a frame moved by ``z' = J A z``."""
    basis = intersection_basis(frame, V, tol)
    if basis.shape[1] == 0:
        raise SymplecticError("no crossing here")
    return _record(location, basis.T @ np.asarray(A, dtype=float) @ basis, 0.0)


# ---------------------------------------------------------------------------
# paths


class SampledPath:
    """Lagrangian path through given frames.

    Between samples the path moves along the graph of ``s S`` over the left
    sample (``S`` symmetric), which stays exactly Lagrangian.
    """

    def __init__(self, ts: Sequence[float], frames: Sequence[FrameLike]):
        self.ts = np.asarray(ts, dtype=float)
        self.frames = [orthonormalize(_cols(f)) for f in frames]
        if self.ts.size != len(self.frames) or self.ts.size < 2:
            raise SymplecticError("a sampled path needs matching times and frames (at least two)")
        if np.any(np.diff(self.ts) <= 0):
            raise SymplecticError("path times must increase")
        self._graphs = []
        for z0, z1 in zip(self.frames[:-1], self.frames[1:]):
            x = z0.T @ z1
            y = apply_J(z0).T @ z1
            s = np.linalg.solve(x.T, y.T).T
            self._graphs.append(0.5 * (s + s.T))

    def __call__(self, t: float) -> np.ndarray:
        k = int(np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.ts.size - 2))
        s = (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k])
        z0 = self.frames[k]
        return z0 + apply_J(z0) @ (s * self._graphs[k])


PathLike = Union[Callable[[float], np.ndarray], LagrangianFrame, SampledPath, np.ndarray]


def _as_callable(path: PathLike):
    if isinstance(path, (LagrangianFrame, np.ndarray)):
        z = orthonormalize(_cols(path))
        return (lambda t: z), True
    return (lambda t: _cols(path(t))), False


def _graph_rate(path, t0, h, side, z0):
    """``d/dt`` of the symmetric graph matrix of ``path`` over ``z0`` at ``t0``."""
    jz0 = apply_J(z0)

    def graph(t):
        z = path(t)
        s = np.linalg.solve((z0.T @ z).T, (jz0.T @ z).T).T
        return 0.5 * (s + s.T)

    if side == 0:
        return (graph(t0 + h) - graph(t0 - h)) / (2 * h)
    sgn = 1.0 if side > 0 else -1.0
    return sgn * (-3 * graph(t0) + 4 * graph(t0 + sgn * h) - graph(t0 + 2 * sgn * h)) / (2 * h)


def pair_crossing_form(l1, l2, t0, tol=1e-8, fd_step=1e-6, side=0) -> tuple[np.ndarray, np.ndarray]:
    """Crossing form of the pair ``(l1(t), l2(t))`` at ``t0`` on the intersection.

    Returns the form matrix ``Gamma(l2) - Gamma(l1)`` and the intersection basis.
    ``side`` selects central (0), forward (+1) or backward (-1) differences.
    """
    f1, const1 = _as_callable(l1)
    f2, const2 = _as_callable(l2)
    z1 = orthonormalize(f1(t0))
    z2 = orthonormalize(f2(t0))
    basis = intersection_basis(z1, z2, tol)
    form = np.zeros((basis.shape[1], basis.shape[1]))
    for f, z, const, sgn in ((f1, z1, const1, -1.0), (f2, z2, const2, 1.0)):
        if const:
            continue
        a = z.T @ basis
        form += sgn * a.T @ _graph_rate(f, t0, fd_step, side, z) @ a
    return 0.5 * (form + form.T), basis


def _pair_det(f1, f2, t):
    return float(np.linalg.det(apply_J(orthonormalize(f2(t))).T @ orthonormalize(f1(t))))


def _pair_sine(f1, f2, t):
    return float(principal_sines(f1(t), f2(t))[0])


def refine_samples(l1, l2, ts, min_len=None, max_points=4000, slack=0.5):
    """Bisect sample intervals until no crossing pair can hide between samples.

    An interval is split while the paths move (largest principal sine between
    the frames at its ends, summed over both paths) by more than ``slack``
    times the smaller of the two end sines, or until it is shorter than
    ``min_len``. For smooth paths this leaves every pair of crossings
    separated by at least one sample.
    """
    f1, _ = _as_callable(l1)
    f2, _ = _as_callable(l2)
    ts = [float(t) for t in np.unique(np.asarray(ts, dtype=float))]
    if min_len is None:
        min_len = 1e-6 * (ts[-1] - ts[0])
    frames = {t: (f1(t), f2(t)) for t in ts}

    def sine(t):
        return principal_sines(*frames[t])[0]

    k = 0
    while k < len(ts) - 1:
        a, b = ts[k], ts[k + 1]
        move = principal_sines(frames[a][0], frames[b][0])[-1] + principal_sines(frames[a][1], frames[b][1])[-1]
        if b - a > min_len and move > slack * min(sine(a), sine(b)) and len(ts) < max_points:
            mid = 0.5 * (a + b)
            frames[mid] = (f1(mid), f2(mid))
            ts.insert(k + 1, mid)
            continue
        k += 1
    return np.array(ts)


def locate_crossings(l1, l2, ts, tol=1e-8, xtol=1e-10, near=0.3, adaptive=False):
    """Interior crossing locations of the pair on the sample grid ``ts``.

    With ``adaptive`` the grid is first refined by :func:`refine_samples`.
    """
    f1, _ = _as_callable(l1)
    f2, _ = _as_callable(l2)
    ts = np.asarray(ts, dtype=float)
    if adaptive:
        ts = refine_samples(f1, f2, ts)
    sines = np.array([_pair_sine(f1, f2, t) for t in ts])
    dets = np.array([_pair_det(f1, f2, t) for t in ts])
    found = []
    a, b = ts[0], ts[-1]
    for k in range(ts.size - 1):
        if dets[k] * dets[k + 1] < 0:
            t = brentq(lambda s: _pair_det(f1, f2, s), ts[k], ts[k + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
            if _pair_sine(f1, f2, t) < tol:
                found.append(t)
    for k in range(1, ts.size - 1):
        if sines[k] <= sines[k - 1] and sines[k] <= sines[k + 1] and sines[k] < near:
            res = minimize_scalar(
                lambda s: _pair_sine(f1, f2, s),
                bounds=(ts[k - 1], ts[k + 1]),
                method="bounded",
                options={"xatol": xtol},
            )
            if res.fun < tol:
                found.append(float(res.x))
    found.sort()
    merged = []
    step = np.min(np.diff(ts)) if ts.size > 1 else 1.0
    for t in found:
        # the same crossing reached by two routes: still intersecting in between
        if merged and (abs(t - merged[-1]) < 1e-3 * step or _pair_sine(f1, f2, 0.5 * (t + merged[-1])) < tol):
            continue
        merged.append(t)
    span = max(b - a, 1e-300)
    return [t for t in merged if min(t - a, b - t) > 1e-7 * span], sines


def maslov_index_pair(
    l1: PathLike,
    l2: PathLike,
    ts: Sequence[float] | None = None,
    tol: float = 1e-8,
    fd_step: float | None = None,
    form_tol: float = 1e-6,
    adaptive: bool = False,
) -> tuple[int, list[CrossingRecord]]:
    """``i_CLM(l1(t), l2(t); t in [a, b])`` from crossing forms.

    Endpoint convention: the left endpoint contributes the number of positive
    eigenvalues of its form, interior crossings their signature, and the right
    endpoint minus the number of negative eigenvalues.
    """
    _check_tol(tol)
    if ts is None:
        grids = [p.ts for p in (l1, l2) if isinstance(p, SampledPath)]
        if not grids:
            raise SymplecticError("sample grid required for callable paths")
        ts = np.unique(np.concatenate(grids))
    ts = np.asarray(ts, dtype=float)
    if ts.size < 2 or ts[0] == ts[-1]:
        return 0, []
    a, b = float(ts[0]), float(ts[-1])
    h = fd_step if fd_step is not None else 1e-5 * (b - a)
    f1, _ = _as_callable(l1)
    f2, _ = _as_callable(l2)

    total = 0
    records = []
    if principal_sines(f1(a), f2(a))[0] < tol:
        form, _ = pair_crossing_form(l1, l2, a, tol, h, side=+1)
        rec = _record(a, form, form_tol)
        total += int(np.sum(np.asarray(rec.form_eigenvalues) > form_tol))
        records.append(rec)
    interior, _ = locate_crossings(l1, l2, ts, tol, adaptive=adaptive)
    for t in interior:
        form, _ = pair_crossing_form(l1, l2, t, tol, h, side=0)
        rec = _record(t, form, form_tol)
        if rec.intersection_dim == 0:
            continue
        if np.min(np.abs(rec.form_eigenvalues)) <= form_tol:
            raise IrregularCrossingError(
                f"irregular crossing at t={t:.6g}; refine path or perturb (form eigenvalues {rec.form_eigenvalues})"
            )
        total += rec.signature
        records.append(rec)
    if principal_sines(f1(b), f2(b))[0] < tol:
        form, _ = pair_crossing_form(l1, l2, b, tol, h, side=-1)
        rec = _record(b, form, form_tol)
        total -= int(np.sum(np.asarray(rec.form_eigenvalues) < -form_tol))
        records.append(rec)
    return total, records


# ---------------------------------------------------------------------------
# triple and Hormander indices


def _rank_tol(m):
    return 1e-9 * max(1.0, np.abs(m).max()) if m.size else 1e-9


def quadratic_form_Q(alpha: FrameLike, beta: FrameLike, delta: FrameLike) -> tuple[np.ndarray, np.ndarray]:
    """Basis of ``alpha cap (beta + delta)`` and the symmetrized form ``omega(y_i, z_j)``."""
    za, zb, zd = (orthonormalize(_cols(f)) for f in (alpha, beta, delta))
    bd = np.hstack([zb, zd])
    u, s, _ = np.linalg.svd(bd, full_matrices=False)
    span = u[:, s > 1e-9]
    resid = za - span @ (span.T @ za)
    _, s, vt = np.linalg.svd(resid)
    s = np.concatenate([s, np.zeros(vt.shape[0] - s.size)])
    coeff = vt[s < 1e-9].T
    if coeff.shape[1] == 0:
        return np.zeros((za.shape[0], 0)), np.zeros((0, 0))
    basis = orthonormalize(za @ coeff)
    split = np.linalg.pinv(bd, rcond=1e-9) @ basis
    n = zb.shape[1]
    ys = zb @ split[:n]
    zs = zd @ split[n:]
    form = apply_J(ys).T @ zs
    return basis, 0.5 * (form + form.T)


def _n_negative(form):
    return int(np.sum(np.linalg.eigvalsh(form) < -_rank_tol(form))) if form.size else 0


def _n_positive(form):
    return int(np.sum(np.linalg.eigvalsh(form) > _rank_tol(form))) if form.size else 0


def _dim3(a, b, c, tol=1e-8):
    """``dim(a cap b cap c)``."""
    za, zb, zc = (orthonormalize(_cols(f)) for f in (a, b, c))
    stacked = np.vstack([apply_J(zb).T @ za, apply_J(zc).T @ za])
    s = np.linalg.svd(stacked, compute_uv=False)
    return int(np.sum(s < tol)) + max(0, za.shape[1] - s.size)


def triple_index(alpha: FrameLike, beta: FrameLike, kappa: FrameLike, tol: float = 1e-8) -> int:
    """``m+(Q(alpha, beta; kappa)) + dim(alpha cap kappa) - dim(alpha cap beta cap kappa)``.

    The positive inertia is the count that matches the transversal formula
    (which uses negative inertia) and the Hormander identity for ``i_CLM``
    under ``omega = <J., .>``; the two counts trade places if omega flips.
    """
    _, form = quadratic_form_Q(alpha, beta, kappa)
    return _n_positive(form) + intersection_dim(alpha, kappa, tol) - _dim3(alpha, beta, kappa, tol)


def common_transversal(frames: Sequence[FrameLike], rng: np.random.Generator | None = None, margin: float = 1e-3) -> LagrangianFrame:
    rng = rng if rng is not None else np.random.default_rng(0)
    n = _cols(frames[0]).shape[1]
    for _ in range(1000):
        delta = random_lagrangian(n, rng)
        if all(principal_sines(delta, f)[0] > margin for f in frames):
            return delta
    raise SymplecticError("no common transversal found")  # pragma: no cover


def triple_index_via_transversal(
    alpha: FrameLike, beta: FrameLike, kappa: FrameLike, delta: FrameLike | None = None
) -> int:
    """``m-(Q(alpha, delta; beta)) + m-(Q(beta, delta; kappa)) - m-(Q(alpha, delta; kappa))``."""
    if delta is None:
        delta = common_transversal([alpha, beta, kappa])
    return (
        _n_negative(quadratic_form_Q(alpha, delta, beta)[1])
        + _n_negative(quadratic_form_Q(beta, delta, kappa)[1])
        - _n_negative(quadratic_form_Q(alpha, delta, kappa)[1])
    )


def hormander_index(l1: FrameLike, l2: FrameLike, k1: FrameLike, k2: FrameLike, tol: float = 1e-8) -> int:
    first = triple_index(l1, l2, k2, tol) - triple_index(l1, l2, k1, tol)
    second = triple_index(l1, k1, k2, tol) - triple_index(l2, k1, k2, tol)
    if first != second:
        raise SymplecticError(
            f"Hormander index formulas disagree ({first} vs {second}); rank decision is numerically ambiguous"
        )
    return first


def write_crossings_csv(records: Sequence[CrossingRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location", "dim", "signature", "form_eigenvalues"])
        for r in records:
            writer.writerow([repr(r.location), r.intersection_dim, r.signature, " ".join(repr(float(e)) for e in r.form_eigenvalues)])
