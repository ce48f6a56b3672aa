"""Skew-gradient reaction-diffusion models ``M w_t = D w_xx + Q grad V(w)``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters."""


class MissingProfileError(ValueError):
    """An x-dependent bound was requested without a pulse profile."""


@dataclass(frozen=True)
class SkewGradientModel:
    """Model data. ``M``, ``D`` and ``Q`` are stored by their diagonals.

    ``grad_v`` and ``hess_v`` act on arrays of shape ``(..., n)`` and return
    ``(..., n)`` and ``(..., n, n)`` respectively.
    """

    n: int
    j: int
    m: np.ndarray
    d: np.ndarray
    grad_v: Callable[[np.ndarray], np.ndarray]
    hess_v: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if not 1 <= self.j <= self.n:
            raise ModelError(f"activator count j={self.j} outside [1, {self.n}]")
        if m.shape != (self.n,) or d.shape != (self.n,):
            raise ModelError("M and D must be given as length-n diagonals")
        if np.any(m <= 0):
            raise ModelError("M must have strictly positive diagonal entries")
        if np.any(d <= 0):
            raise ModelError("D must have strictly positive diagonal entries")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "d", d)

    @property
    def q(self) -> np.ndarray:
        """Diagonal of the signature matrix ``diag(Id_j, -Id_{n-j})``."""
        return np.concatenate([np.ones(self.j), -np.ones(self.n - self.j)])

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.m)

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q)

    @property
    def B_inf(self) -> np.ndarray:
        """Hessian of V at the rest state."""
        return np.asarray(self.hess_v(np.zeros(self.n)), dtype=float)

    @property
    def inhibitors(self) -> np.ndarray:
        return np.arange(self.j, self.n)

    def reaction(self, w: np.ndarray) -> np.ndarray:
        """``Q grad V(w)`` for ``w`` of shape ``(..., n)``."""
        return self.q * self.grad_v(w)

    def with_params(self, **changes) -> "SkewGradientModel":
        """Rebuild a named model with some parameters replaced."""
        params = {**self.params, **changes}
        if self.kind == "fhn":
            return build_fhn(**params)
        if self.kind == "scalar":
            return build_scalar_bistable()
        if self.kind == "polynomial":
            return build_polynomial(**params)
        raise ModelError(f"cannot rebuild model of kind {self.kind!r}")


def build_fhn(d: float, tau: float, gamma: float, beta: float, strict: bool = True) -> SkewGradientModel:
    """FitzHugh-Nagumo type system with cubic inhibitor kinetics.

    u_t = d u_xx + f(u) - v,  tau v_t = v_xx - gamma v - v^3 + u,
    f(u) = u (1 - u)(u - beta).

    With ``strict=False`` a non-positive ``beta`` is accepted so that the
    hypothesis check can report the failure instead of the builder.
    """
    checked = (("d", d), ("tau", tau), ("gamma", gamma)) + ((("beta", beta),) if strict else ())
    for name, value in checked:
        if not np.isfinite(value) or value <= 0:
            raise ModelError(f"parameter {name} must be positive, got {value}")
    if not np.isfinite(beta) or beta >= 1:
        raise ModelError(f"parameter beta must lie in (0, 1), got {beta}")

    def grad_v(w):
        w = np.asarray(w, dtype=float)
        u, v = w[..., 0], w[..., 1]
        # dV/du = f(u) - v, dV/dv = gamma v + v^3 - u
        fu = u * (1.0 - u) * (u - beta)
        return np.stack([fu - v, gamma * v + v**3 - u], axis=-1)

    def hess_v(w):
        w = np.asarray(w, dtype=float)
        u, v = w[..., 0], w[..., 1]
        fprime = -3.0 * u**2 + 2.0 * (1.0 + beta) * u - beta
        out = np.empty(w.shape[:-1] + (2, 2))
        out[..., 0, 0] = fprime
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = -1.0
        out[..., 1, 1] = gamma + 3.0 * v**2
        return out

    return SkewGradientModel(
        n=2,
        j=1,
        m=np.array([1.0, tau]),
        d=np.array([d, 1.0]),
        grad_v=grad_v,
        hess_v=hess_v,
        kind="fhn",
        params={"d": float(d), "tau": float(tau), "gamma": float(gamma), "beta": float(beta)},
    )


def build_scalar_bistable() -> SkewGradientModel:
    """Scalar oracle: grad V(u) = u^2 - u, pulse equation u'' - u + u^2 = 0."""

    def grad_v(w):
        w = np.asarray(w, dtype=float)
        return w**2 - w

    def hess_v(w):
        w = np.asarray(w, dtype=float)
        return (2.0 * w - 1.0)[..., None]

    return SkewGradientModel(
        n=1, j=1, m=np.ones(1), d=np.ones(1), grad_v=grad_v, hess_v=hess_v, kind="scalar"
    )


def build_polynomial(n, j, m, d, terms) -> SkewGradientModel:
    """Model with a polynomial potential ``V(w) = sum c * prod w_i^p_i``.

    ``terms`` is a list of ``{"coef": c, "powers": [p_1, ..., p_n]}``.
    """
    coefs = np.array([float(t["coef"]) for t in terms])
    powers = np.array([list(t["powers"]) for t in terms], dtype=int).reshape(len(terms), n)
    if np.any(powers < 0):
        raise ModelError("polynomial powers must be non-negative")

    def _mono(w, p):
        out = np.ones(w.shape[:-1])
        for i in range(n):
            if p[i]:
                out = out * w[..., i] ** p[i]
        return out

    def grad_v(w):
        w = np.asarray(w, dtype=float)
        g = np.zeros(w.shape)
        for c, p in zip(coefs, powers):
            for i in range(n):
                if p[i] == 0:
                    continue
                q = p.copy()
                q[i] -= 1
                g[..., i] += c * p[i] * _mono(w, q)
        return g

    def hess_v(w):
        w = np.asarray(w, dtype=float)
        h = np.zeros(w.shape + (n,))
        for c, p in zip(coefs, powers):
            for a in range(n):
                for b in range(n):
                    q = p.copy()
                    fac = q[a]
                    q[a] -= 1
                    if fac == 0:
                        continue
                    fac *= q[b]
                    q[b] -= 1
                    if fac == 0:
                        continue
                    h[..., a, b] += c * fac * _mono(w, q)
        return h

    params = {
        "n": int(n),
        "j": int(j),
        "m": [float(x) for x in m],
        "d": [float(x) for x in d],
        "terms": [{"coef": float(c), "powers": [int(x) for x in p]} for c, p in zip(coefs, powers)],
    }
    return SkewGradientModel(
        n=int(n), j=int(j), m=np.asarray(m, float), d=np.asarray(d, float),
        grad_v=grad_v, hess_v=hess_v, kind="polynomial", params=params,
    )


@dataclass
class HypothesisReport:
    h1_holds: bool
    c2: float
    h2_holds: bool
    c3_h2: float | None
    c1: float
    lambda_hat: float
    epsilon_max: float
    h1_direction: list | None = None
    h2_violation_x: float | None = None

    def to_dict(self) -> dict:
        return {
            "h1_holds": bool(self.h1_holds),
            "c2": float(self.c2),
            "h2_holds": bool(self.h2_holds),
            "c3_h2": None if self.c3_h2 is None else float(self.c3_h2),
            "c1": float(self.c1),
            "lambda_hat": float(self.lambda_hat),
            "epsilon_max": float(self.epsilon_max),
            "h1_direction": self.h1_direction,
            "h2_violation_x": self.h2_violation_x,
        }


C1_SAFETY = 1.05


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _box_samples(amplitude, n, per_axis=41):
    axes = [np.linspace(-a, a, per_axis) for a in np.broadcast_to(amplitude, (n,))]
    return np.array(list(itertools.product(*axes)))


def check_hypotheses(model: SkewGradientModel, profile=None, amplitude=None) -> HypothesisReport:
    """Check (H1)/(H2) and derive the margins and bounds used downstream.

    The x-dependent quantities (``c1`` and the (H2) infimum) are evaluated on
    the profile grid together with the rest state. Without a profile, an
    ``amplitude`` bound on ``|w_i|`` lets them be sampled over a box instead.
    """
    q = model.q
    qb_inf = _sym(q[:, None] * model.B_inf)
    evals, evecs = np.linalg.eigh(qb_inf)
    h1 = bool(evals[-1] < 0)
    c2 = float(abs(evals[-1]))
    h1_dir = None if h1 else evecs[:, -1].tolist()

    if profile is not None:
        states = np.vstack([profile.w, np.zeros((1, model.n))])
        xs = np.append(profile.grid, np.inf)
    elif amplitude is not None:
        states = np.vstack([_box_samples(amplitude, model.n), np.zeros((1, model.n))])
        xs = None
    else:
        raise MissingProfileError("c1 and the (H2) margin need a pulse profile or an amplitude bound")

    hess = model.hess_v(states)
    qb = _sym(q[:, None] * hess)
    norms = np.abs(np.linalg.eigvalsh(qb)).max(axis=-1)
    c1 = C1_SAFETY * float(norms.max())
    lam_hat = c1 / float(model.m.min())

    inh = model.inhibitors
    h2_x = None
    if inh.size == 0:
        h2, c3 = True, None
        eps_max = c2 / 2.0
    else:
        sub = hess[:, inh[:, None], inh[None, :]]
        mins = np.linalg.eigvalsh(_sym(sub))[:, 0]
        k = int(np.argmin(mins))
        c3 = float(mins[k])
        h2 = bool(c3 > 0)
        if not h2 and xs is not None:
            h2_x = float(xs[k])
        eps_max = min(c2, c3) / 2.0 if h2 else 0.0
    if not h1:
        eps_max = 0.0
    return HypothesisReport(
        h1_holds=h1, c2=c2, h2_holds=h2, c3_h2=c3, c1=c1, lambda_hat=lam_hat,
        epsilon_max=eps_max, h1_direction=h1_dir, h2_violation_x=h2_x,
    )
