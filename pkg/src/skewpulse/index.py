"""Stability index, spectral flow, momentum criterion and the verdict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import (
    HamiltonianFamily,
    advance,
    asymptotic_split,
    assemble_A,
    integrate_unstable,
    matching_frames,
)
from .model import SkewGradientModel, check_hypotheses
from .pulse import FlatInhibitorError, PulseProfile, profile_quadrature, tau0
from .symplectic import (
    CrossingRecord,
    crossing_form_flow,
    lambda_R,
    locate_crossings,
    maslov_index_pair,
    orthonormalize,
    principal_sines,
)


class IndexComputationError(RuntimeError):
    """Index computation is inconsistent with the hypotheses or the scan range."""


@dataclass
class Verdict:
    kind: str  # "Unstable" | "StableSufficient" | "Inconclusive"
    reason: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "reason": self.reason}


@dataclass
class TauScan:
    i_w0: int
    crossings: list
    t_cap: float
    stationarity: float
    trace_tau: np.ndarray = field(repr=False, default=None)
    trace_sine: np.ndarray = field(repr=False, default=None)


@dataclass
class IndexReport:
    i_w0: int | None = None
    crossings: list = field(default_factory=list)
    spectral_flow: int | None = None
    sf_crossings: list = field(default_factory=list)
    criterion_integral: float | None = None
    tau0: float | None = None
    verdict: Verdict | None = None

    def to_dict(self) -> dict:
        return {
            "i_w0": self.i_w0,
            "crossings": [c.to_dict() for c in self.crossings],
            "spectral_flow": self.spectral_flow,
            "sf_crossings": [c.to_dict() for c in self.sf_crossings],
            "criterion_integral": self.criterion_integral,
            "tau0": self.tau0,
            "verdict": None if self.verdict is None else self.verdict.to_dict(),
        }


# ---------------------------------------------------------------------------
# stability index


def scan_tau(
    model: SkewGradientModel,
    profile: PulseProfile,
    t_cap: float | None = None,
    tol: float = 1e-6,
    max_step: float | None = None,
    stationary_tol: float = 1e-4,
) -> TauScan:
    """Crossings of ``E^u(tau)`` with ``Lambda_R`` for ``tau`` in ``[-X, T_cap]``.

    ``T_cap`` defaults to ``14 / gap`` past the right edge of the pulse (last
    point where ``|w0'|`` is above 1e-3 of its maximum), where the translation
    mode has decayed by about ``e^-14`` and the profile no longer determines
    its direction well; it is capped at 90% of the half-width.
    ``stationarity`` is the largest principal sine between ``E^u`` in the last
    10% of the scan and ``E^u(T_cap)``.
    """
    fam = HamiltonianFamily(model, profile, max_step=max_step)
    _, _, gap = asymptotic_split(fam)
    x_end = fam.half_width
    if t_cap is None:
        speed = np.max(np.abs(profile.w_prime), axis=1)
        edge = float(profile.grid[np.nonzero(speed >= 1e-3 * speed.max())[0][-1]])
        t_cap = min(0.9 * x_end, max(edge, 0.0) + 14.0 / gap)
    if not 0 < t_cap <= x_end:
        raise ValueError(f"T_cap must lie in (0, {x_end}]")
    path = integrate_unstable(fam, pin_translation=True)
    keep = path.grid <= t_cap + 1e-12
    grid, frames = path.grid[keep], path.frames[keep]
    lr = lambda_R(model.n, model.j)

    def frame_at(t):
        k = int(np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 1))
        return advance(fam, frames[k], grid[k], t)

    locs, sines = locate_crossings(lr, frame_at, grid, tol=tol)
    # crossings at the nodes themselves are found by the sign test on either side;
    # also accept exact node hits
    records = []
    tail = grid[-1] - 0.1 * (grid[-1] - grid[0])
    for t in locs:
        if t >= tail:
            raise IndexComputationError(f"crossing at tau={t:.4g} in the last 10% of the scan; increase T_cap")
        z = frame_at(t)
        rec = crossing_form_flow(assemble_A(fam, t), z, lr, tol=tol, location=t)
        if min(rec.form_eigenvalues) <= 0:
            raise IndexComputationError(
                f"(H2) inconsistent with computed crossing at tau={t:.6g}: form eigenvalues {rec.form_eigenvalues}"
            )
        records.append(rec)
    last = orthonormalize(frames[-1])
    stat = max(principal_sines(frames[i], last)[-1] for i in range(grid.size) if grid[i] >= tail)
    return TauScan(
        i_w0=int(sum(r.intersection_dim for r in records)),
        crossings=records,
        t_cap=float(grid[-1]),
        stationarity=float(stat),
        trace_tau=grid,
        trace_sine=sines,
    )


def stability_index(model, profile, t_cap=None, tol=1e-6, max_step=None) -> tuple[int, list[CrossingRecord]]:
    """``i(w0)``: total intersection dimension of ``E^u(tau)`` with ``Lambda_R``."""
    scan = scan_tau(model, profile, t_cap=t_cap, tol=tol, max_step=max_step)
    return scan.i_w0, scan.crossings


# ---------------------------------------------------------------------------
# spectral flow


class _MatchingPaths:
    """``lam -> E^s_lam(0)`` and ``lam -> E^u_lam(0)`` with a shared cache.

    Without a fixed ``max_step`` the integration step is chosen per dyadic
    band ``(top 2^-k-1, top 2^-k]`` of lambda from the band's upper end, so
    frames are smooth in lambda inside each band while small lambda (where
    the crossings usually are) does not pay for the stiffness at ``top``.
    """

    BANDS = 30

    def __init__(self, family: HamiltonianFamily, top: float | None = None):
        self.family = family
        self.top = top
        self._memo = {}

    def _step(self, lam):
        if self.top is None or self.top <= 0:
            return self.family.max_step
        k = 0 if lam >= self.top else min(self.BANDS, int(np.floor(np.log2(self.top / max(lam, 1e-300)))))
        return self.family.step_size(lam_ref=self.top * 2.0**-k)

    def frames(self, lam):
        lam = float(lam)
        if lam not in self._memo:
            fam = self.family.at(lam=max(lam, 0.0))
            fam.max_step = self._step(max(lam, 0.0))
            self._memo[lam] = matching_frames(fam)
        return self._memo[lam]

    def stable(self, lam):
        return self.frames(lam)[0]

    def unstable(self, lam):
        return self.frames(lam)[1]


def spectral_flow_F(
    model: SkewGradientModel,
    profile: PulseProfile,
    lambda_max: float | None = None,
    grid=None,
    tol: float = 1e-6,
    eps: float = 0.0,
    lambda_min: float = 0.0,
    samples: int = 41,
    max_step: float | None = None,
) -> tuple[int, list[CrossingRecord]]:
    """``sf = -i_CLM(E^s_lam(0), E^u_lam(0); lam in [lambda_min, lambda_max])``.

    The default grid is uniform with ``samples`` points plus a geometric
    refinement toward ``lambda_min``; it is then bisected adaptively wherever
    the two paths move too much between samples to rule out a hidden pair of
    crossings.
    """
    if lambda_max is None:
        lambda_max = check_hypotheses(model, profile).lambda_hat
    if grid is None:
        if lambda_max == lambda_min:
            return 0, []
        # eigenvalues split off from the translation mode sit close to lambda_min and
        # often come in pairs inside one uniform interval, so refine geometrically there
        span = lambda_max - lambda_min
        grid = np.union1d(
            np.linspace(lambda_min, lambda_max, samples),
            lambda_min + span * np.geomspace(1e-6, 1.0, samples + 39),
        )
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or grid[0] == grid[-1]:
        return 0, []
    base = HamiltonianFamily(model, profile, eps=eps, max_step=max_step)
    paths = _MatchingPaths(base, top=None if max_step is not None else float(max(grid[-1], abs(grid[0]))))
    span = grid[-1] - grid[0]
    fd = min(1e-5 * span, 1e-2 * float(np.min(np.diff(grid))))
    total, records = maslov_index_pair(paths.stable, paths.unstable, grid, tol=tol, fd_step=fd, adaptive=True)
    for r in records:
        if r.location == grid[-1] and r.location > grid[0]:
            raise IndexComputationError(f"crossing at lambda_max={grid[-1]:.6g}; raise lambda_max")
    return -total, records


def pair_form_analytic(model: SkewGradientModel, profile: PulseProfile) -> float:
    """``-int <QM w0', w0'>``: lambda-crossing form of the pair on the translation mode."""
    return -profile_quadrature(profile, model.m, model.q).value


# ---------------------------------------------------------------------------
# criterion and verdict


@dataclass
class CriterionResult:
    value: float
    tau0: float | None
    coarse_warning: bool


def criterion_integral(model: SkewGradientModel, profile: PulseProfile) -> CriterionResult:
    """``int <Q M w0', w0'> dx`` (and ``tau0`` for FitzHugh-Nagumo)."""
    q = profile_quadrature(profile, model.m, model.q)
    t0 = None
    if model.kind == "fhn":
        try:
            t0 = tau0(profile)
        except FlatInhibitorError:
            t0 = None
    return CriterionResult(q.value, t0, q.coarse_warning)


def verdict(
    i_w0: int,
    criterion: float,
    sufficiency_ok: bool | None = None,
    zero_simple: bool | None = None,
) -> Verdict:
    reasons = []
    if i_w0 > 0:
        reasons.append("stability index positive")
    if criterion < 0:
        reasons.append("criterion integral negative")
    if reasons:
        return Verdict("Unstable", "; ".join(reasons))
    if i_w0 == 0 and sufficiency_ok and zero_simple:
        return Verdict("StableSufficient", "stability index zero and sufficiency conditions hold")
    missing = []
    if not sufficiency_ok:
        missing.append("sufficiency check not passed")
    if not zero_simple:
        missing.append("zero eigenvalue not shown simple")
    return Verdict("Inconclusive", "; ".join(missing) or "no criterion applies")
