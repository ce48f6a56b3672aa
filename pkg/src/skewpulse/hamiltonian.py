"""The linear Hamiltonian system ``z' = J A_{lam,eps}(x) z`` along a pulse.

With ``z = (Q D phi', phi)`` the eigenvalue problem
``D phi'' + Q B(x) phi = lam M phi`` (shifted by ``-eps Q`` on the right)
becomes ``z' = J A z`` with ``A = diag((QD)^{-1}, B(x) - eps I - lam Q M)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import schur

from . import kernels
from .model import SkewGradientModel
from .pulse import PulseProfile
from .symplectic import LagrangianFrame, SampledPath, apply_J, orthonormalize


class NonHyperbolicError(ValueError):
    """``J A(inf)`` has an eigenvalue on (or numerically near) the imaginary axis."""


class IntegrationError(RuntimeError):
    """Frame transport lost isotropy."""


ISOTROPY_LIMIT = 1e-8
STEP_FACTOR = 0.02


@dataclass
class HamiltonianFamily:
    model: SkewGradientModel
    profile: PulseProfile
    lam: float = 0.0
    eps: float = 0.0
    max_step: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"spectral parameter must be >= 0, got {self.lam}")
        if self.eps < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.eps}")

    def at(self, lam: float | None = None, eps: float | None = None) -> "HamiltonianFamily":
        """Same model and pulse at other parameters; shares the B(x) cache."""
        return replace(
            self,
            lam=self.lam if lam is None else float(lam),
            eps=self.eps if eps is None else float(eps),
        )

    @property
    def qd_inv(self) -> np.ndarray:
        return 1.0 / (self.model.q * self.model.d)

    @property
    def qm(self) -> np.ndarray:
        return self.model.q * self.model.m

    @property
    def half_width(self) -> float:
        return float(min(-self.profile.grid[0], self.profile.grid[-1]))

    def B(self, x) -> np.ndarray:
        """Hessian along the pulse; ``B(inf)`` outside the profile grid."""
        x = np.asarray(x, dtype=float)
        if "spline" not in self._cache:
            p = self.profile
            self._cache["spline"] = CubicHermiteSpline(p.grid, p.w, p.w_prime, axis=0)
        g = self.profile.grid
        out = np.broadcast_to(self.model.B_inf, x.shape + (self.model.n,) * 2).copy()
        inside = (x >= g[0]) & (x <= g[-1])
        if np.any(inside):
            out[inside] = self.model.hess_v(self._cache["spline"](x[inside]))
        return out

    def step_size(self, lam_ref: float | None = None) -> float:
        """Integration step; fixed per family so that frames are smooth in lambda.

        Chosen so that ``h * rho(J A(x)) <= STEP_FACTOR`` along the whole pulse.
        """
        if self.max_step is not None and lam_ref is None:
            return float(self.max_step)
        lam = 0.0 if lam_ref is None else lam_ref
        key = ("rate", lam)
        if key not in self._cache:
            ref = self.at(lam=lam, eps=0.0)
            xs = np.append(self.profile.grid[:: max(1, self.profile.grid.size // 400)], np.inf)
            self._cache[key] = max(
                float(np.max(np.abs(np.linalg.eigvals(assemble_generator(ref, x))))) for x in xs
            )
        return min(0.02, STEP_FACTOR / max(self._cache[key], 1e-12))

    def stage_data(self, nodes: np.ndarray):
        """B at the two Gauss nodes of every step between consecutive ``nodes``."""
        key = (nodes[0], nodes[-1], nodes.size, float(np.sum(nodes)))
        hit = self._cache.get(("stages", key))
        if hit is not None:
            return hit
        hs = np.diff(nodes)
        b1 = self.B(nodes[:-1] + kernels.GAUSS_C1 * hs)
        b2 = self.B(nodes[:-1] + kernels.GAUSS_C2 * hs)
        data = (np.ascontiguousarray(b1), np.ascontiguousarray(b2), np.ascontiguousarray(hs))
        self._cache[("stages", key)] = data
        return data


def assemble_A(family: HamiltonianFamily, x: float) -> np.ndarray:
    """``diag((QD)^{-1}, B(x) - eps I - lam Q M)``."""
    n = family.model.n
    a = np.zeros((2 * n, 2 * n))
    a[:n, :n] = np.diag(family.qd_inv)
    a[n:, n:] = family.B(x) - family.eps * np.eye(n) - family.lam * np.diag(family.qm)
    return a


def assemble_generator(family: HamiltonianFamily, x: float) -> np.ndarray:
    """``J A(x)``."""
    return apply_J(assemble_A(family, x))


def asymptotic_split(family: HamiltonianFamily) -> tuple[LagrangianFrame, LagrangianFrame, float]:
    """Unstable/stable invariant subspaces of ``J A(inf)`` and the spectral gap."""
    k = assemble_generator(family, np.inf)
    mu = np.linalg.eigvals(k)
    gap = float(np.min(np.abs(mu.real)))
    if gap < 1e-10:
        raise NonHyperbolicError("non-hyperbolic asymptotics; (H1) violated?")
    n = family.model.n
    frames = []
    for sort in ("rhp", "lhp"):
        _, z, sdim = schur(k, output="real", sort=sort)
        if sdim != n:
            raise NonHyperbolicError(f"expected an {n}/{n} splitting, got {sdim}")
        frames.append(LagrangianFrame(orthonormalize(z[:, :n])))
    for f in frames:
        if not f.is_lagrangian(1e-10):
            raise NonHyperbolicError("asymptotic eigenspace is not Lagrangian")  # pragma: no cover
    return frames[0], frames[1], gap


@dataclass
class FramePath:
    grid: np.ndarray
    frames: np.ndarray  # (len(grid), 2n, n), orthonormal columns
    direction: str
    worst_isotropy: float = 0.0

    def frame(self, i: int) -> LagrangianFrame:
        return LagrangianFrame(self.frames[i])

    def at(self, tau: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.grid - tau)))
        if abs(self.grid[i] - tau) > 1e-12 * max(1.0, abs(tau)):
            raise KeyError(f"tau={tau} is not a node of this path")
        return self.frames[i]

    def as_path(self) -> SampledPath:
        order = np.argsort(self.grid)
        return SampledPath(self.grid[order], [self.frames[i] for i in order])

    def to_csv(self, path) -> None:
        n2, n = self.frames.shape[1:]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau"] + [f"z{i + 1}_{j + 1}" for j in range(n) for i in range(n2)])
            for t, z in zip(self.grid, self.frames):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in z.T.ravel()])


def _nodes(start: float, stop: float, h: float, extra) -> np.ndarray:
    count = max(1, int(np.ceil(abs(stop - start) / h)))
    base = np.linspace(start, stop, count + 1)
    if extra is not None and len(extra):
        base = np.union1d(base, np.asarray(extra, dtype=float))
        # drop nodes that nearly coincide with a requested one
        keep = np.concatenate([[True], np.diff(base) > 1e-9 * h])
        base = base[keep]
        if stop < start:
            base = base[::-1]
    return base


def _sweep(family, z0, nodes, record):
    b1, b2, hs = family.stage_data(nodes)
    frames, worst = kernels.frame_sweep(
        np.ascontiguousarray(z0), b1, b2, hs, float(family.lam), float(family.eps),
        np.ascontiguousarray(family.qd_inv), np.ascontiguousarray(family.qm), bool(record),
    )
    if worst > ISOTROPY_LIMIT:
        raise IntegrationError(f"isotropy drift {worst:.2e} > {ISOTROPY_LIMIT:.0e}; reduce max_step")
    return frames, float(worst)


def translation_vector(family: HamiltonianFamily, x) -> np.ndarray:
    """``(Q D w0'', w0') = (-grad V(w0), w0')``, the lam = 0 kernel direction."""
    if "spline_prime" not in family._cache:
        p, m = family.profile, family.model
        wpp = -m.reaction(p.w) / m.d
        family._cache["spline_prime"] = CubicHermiteSpline(p.grid, p.w_prime, wpp, axis=0)
    x = np.asarray(x, dtype=float)
    w = family.profile.w_at(x)
    return np.concatenate([-family.model.grad_v(w), family._cache["spline_prime"](x)], axis=-1)


def _pin(z: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Replace the span of ``z`` by ``t`` plus its best (n-1)-dim part omega-orthogonal to ``t``."""
    that = t / np.linalg.norm(t)
    if z.shape[1] == 1:
        return that[:, None] * np.sign(that @ z[:, 0] or 1.0)
    jt = apply_J(that)
    w = z - np.outer(that, that @ z) - np.outer(jt, jt @ z)
    u, _, _ = np.linalg.svd(w, full_matrices=False)
    return orthonormalize(np.column_stack([that, u[:, : z.shape[1] - 1]]))


def _integrate(family, tau_grid, unstable, pin_translation=False):
    x_end = family.half_width
    tau = None if tau_grid is None else np.sort(np.atleast_1d(np.asarray(tau_grid, dtype=float)))
    if tau is not None and (tau[0] < -x_end - 1e-12 or tau[-1] > x_end + 1e-12):
        raise ValueError("tau_grid must lie within the profile grid")
    h = family.step_size()
    v_plus, v_minus, gap = asymptotic_split(family)
    if unstable:
        start, stop, z0 = -x_end, (x_end if tau is None else tau[-1]), v_plus.columns
    else:
        start, stop, z0 = x_end, (-x_end if tau is None else tau[0]), v_minus.columns
    nodes = _nodes(start, stop, h, tau)
    if nodes.size < 2:
        nodes = np.array([start, stop])
    only_end = tau is not None and tau.size == 1
    direction = "unstable" if unstable else "stable"
    pin = pin_translation and family.lam == 0 and family.eps == 0
    if pin:
        # the decaying translation direction is re-imposed every two decay lengths
        chunk = max(2, int(np.ceil(2.0 / (gap * h))))
        pieces, worst, z = [z0[None]], 0.0, z0
        for k in range(0, nodes.size - 1, chunk):
            seg = nodes[k : min(k + chunk, nodes.size - 1) + 1]
            fr, wst = _sweep(family, z, seg, record=True)
            worst = max(worst, wst)
            past_center = seg[-1] > 0 if unstable else seg[-1] < 0
            z = _pin(fr[-1], translation_vector(family, seg[-1])) if past_center else fr[-1]
            fr[-1] = z
            pieces.append(fr[1:])
        frames = np.concatenate(pieces)
    else:
        frames, worst = _sweep(family, z0, nodes, record=not only_end)
    if only_end:
        return FramePath(np.array([nodes[-1]]), frames[-1:], direction, worst)
    if tau is None:
        return FramePath(nodes, frames, direction, worst)
    idx = [int(np.argmin(np.abs(nodes - t))) for t in tau]
    return FramePath(tau, frames[idx], direction, worst)


def advance(family: HamiltonianFamily, z: np.ndarray, x0: float, x1: float) -> np.ndarray:
    """Carry frame ``z`` from ``x0`` to ``x1`` (steps no longer than the family step)."""
    if x1 == x0:
        return np.asarray(z, dtype=float)
    count = max(1, int(np.ceil(abs(x1 - x0) / family.step_size())))
    nodes = np.linspace(x0, x1, count + 1)
    hs = np.diff(nodes)
    b1 = np.ascontiguousarray(family.B(nodes[:-1] + kernels.GAUSS_C1 * hs))
    b2 = np.ascontiguousarray(family.B(nodes[:-1] + kernels.GAUSS_C2 * hs))
    frames, _ = kernels.frame_sweep(
        np.ascontiguousarray(z, dtype=float), b1, b2, hs, float(family.lam), float(family.eps),
        np.ascontiguousarray(family.qd_inv), np.ascontiguousarray(family.qm), False,
    )
    return frames[0]


def integrate_unstable(family: HamiltonianFamily, tau_grid=None, pin_translation: bool = False) -> FramePath:
    """``E^u(tau)``: ``V+`` at ``-X`` carried forward.

    Past the pulse centre the translation solution decays while round-off
    grows, so the computed frame drifts towards ``V+``. With
    ``pin_translation`` (effective at lam = eps = 0) the known kernel
    direction is re-imposed periodically on ``tau > 0``.
    """
    return _integrate(family, tau_grid, unstable=True, pin_translation=pin_translation)


def integrate_stable(family: HamiltonianFamily, tau_grid=None, pin_translation: bool = False) -> FramePath:
    """``E^s(tau)``: ``V-`` at ``+X`` carried backward (pinning on ``tau < 0``)."""
    return _integrate(family, tau_grid, unstable=False, pin_translation=pin_translation)


def matching_frames(family: HamiltonianFamily, tau: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``(E^s(tau), E^u(tau))`` as orthonormal frames."""
    es = integrate_stable(family, [tau]).frames[0]
    eu = integrate_unstable(family, [tau]).frames[0]
    return es, eu


def evans_gap(family: HamiltonianFamily, tau: float = 0.0) -> float:
    """Smallest singular value of ``[E^s(tau) | E^u(tau)]``; zero at eigenvalues."""
    es, eu = matching_frames(family, tau)
    return float(np.linalg.svd(np.hstack([es, eu]), compute_uv=False)[-1])
