"""Direct eigenvalue computation for ``L = M^{-1/2} (D d^2/dx^2 + Q B(x)) M^{-1/2}``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigs, eigsh, splu

from .hamiltonian import HamiltonianFamily, NonHyperbolicError, asymptotic_split
from .model import SkewGradientModel, check_hypotheses
from .pulse import PulseProfile


class SpectrumError(ValueError):
    """Invalid discretization request or failed spectral check."""


DENSE_LIMIT = 2500


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    x: np.ndarray  # interior nodes
    n: int
    order: int
    reaction_scale: float = 1.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def field_to_vector(self, f: np.ndarray) -> np.ndarray:
        """Component-major flattening of a field of shape (len(x), n)."""
        return np.asarray(f).T.ravel()

    def vector_to_field(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v).reshape(self.n, -1).T


def _second_difference(npts: int, h: float, order: int) -> sp.csr_matrix:
    """Dirichlet second-difference matrix on ``npts`` interior nodes."""
    if order == 2:
        return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(npts, npts), format="lil") / h**2
    if order != 4:
        raise SpectrumError(f"order must be 2 or 4, got {order}")
    mat = sp.diags(
        [-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12], [-2, -1, 0, 1, 2], shape=(npts, npts), format="lil"
    )
    # next to the walls fall back to the 4th-order one-sided stencil using the zero boundary value
    # u'' at node 1 from u0..u5 is (10 u0 - 15 u1 - 4 u2 + 14 u3 - 6 u4 + u5) / 12, with u0 = 0
    row = np.array([-15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0
    mat[0, :] = 0
    mat[-1, :] = 0
    mat[0, :5] = row
    mat[-1, -5:] = row[::-1]
    return mat / h**2


def discretize_L(
    model: SkewGradientModel, profile: PulseProfile, grid=None, order: int = 4
) -> DiscreteOperator:
    """Finite-difference ``L`` with homogeneous Dirichlet conditions at ``+-X``.

    ``grid`` may be an explicit uniform node array or a node count; by
    default the profile grid is used. The pulse is interpolated onto it.
    """
    if grid is None:
        x = profile.grid
    elif np.isscalar(grid):
        x = np.linspace(profile.grid[0], profile.grid[-1], int(grid) + 1)
    else:
        x = np.asarray(grid, dtype=float)
    npts = x.size - 1
    if npts < 50:
        raise SpectrumError(f"grid too coarse: N={npts} < 50")
    h = float(x[1] - x[0])
    if np.max(np.abs(np.diff(x) - h)) > 1e-9 * max(1.0, abs(h)):
        raise SpectrumError("discretize_L needs a uniform grid")
    xi = x[1:-1]
    n = model.n
    w = profile.w_at(xi)
    qb = model.q[None, :, None] * model.hess_v(w)  # (m, n, n)
    lap = _second_difference(xi.size, h, order).tocsr()
    msq = 1.0 / np.sqrt(model.m)
    blocks = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            diag = qb[:, a, b] * msq[a] * msq[b]
            blk = sp.diags(diag)
            if a == b:
                blk = blk + (model.d[a] / model.m[a]) * lap
            blocks[a][b] = blk
    mat = sp.bmat(blocks, format="csr")
    weighted = qb * msq[None, :, None] * msq[None, None, :]
    scale = max(1.0, float(np.max(np.linalg.norm(weighted, ord=2, axis=(1, 2)))))
    return DiscreteOperator(mat, xi, n, order, scale)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    n_plus: int
    zero_mode_error: float
    ess_bound_ok: bool | None = None
    sufficiency_ok: bool | None = None
    zero_simple: bool = False
    re_tol: float = 0.0
    im_tol: float = 0.0
    zero_cluster: int = 0
    details: dict = field(default_factory=dict)

    def real_positive(self) -> np.ndarray:
        ev = self.eigenvalues
        sel = (ev.real > self.re_tol) & (np.abs(ev.imag) < self.im_tol)
        if self.zero_cluster:
            sel &= np.abs(ev) > self.details.get("zero_radius", 0.0)
        return np.sort(ev[sel].real)[::-1]

    def to_dict(self) -> dict:
        ev = self.eigenvalues
        order = np.lexsort((-ev.imag, -ev.real))
        return {
            "eigenvalues": [[float(e.real), float(e.imag)] for e in ev[order]],
            "n_plus": int(self.n_plus),
            "zero_mode_error": float(self.zero_mode_error),
            "ess_bound_ok": self.ess_bound_ok,
            "sufficiency_ok": self.sufficiency_ok,
            "zero_simple": bool(self.zero_simple),
            "re_tol": float(self.re_tol),
            "im_tol": float(self.im_tol),
            "zero_cluster": int(self.zero_cluster),
            **self.details,
        }


def _all_eigenvalues(mat: sp.spmatrix) -> np.ndarray:
    dense = mat.toarray()
    if np.allclose(dense, dense.T, atol=0, rtol=0):
        return np.linalg.eigvalsh(dense).astype(complex)
    return np.linalg.eigvals(dense)


def _rightmost_eigenvalues(mat: sp.spmatrix, radius: float, shift: float, k0: int = 12) -> np.ndarray:
    """Eigenvalues within ``radius`` of ``shift`` by shift-invert Arnoldi, growing k until covered."""
    size = mat.shape[0]
    lu = splu((mat - shift * sp.identity(size, format="csc")).tocsc())
    op = sp.linalg.LinearOperator(mat.shape, matvec=lu.solve, dtype=float)
    k = k0
    while True:
        k = min(k, size - 2)
        mu = eigs(op, k=k, which="LM", return_eigenvectors=False, tol=1e-12, maxiter=size * 10)
        lam = shift + 1.0 / mu
        far = np.max(np.abs(lam - shift))
        if far > radius or k >= size - 2:
            return lam
        k *= 2


def eigen_report(
    op: DiscreteOperator,
    model: SkewGradientModel | None = None,
    profile: PulseProfile | None = None,
    lambda_hat: float | None = None,
    rel_tol: float = 1e-6,
    zero_radius: float | None = None,
    pulse_tol: float = 1e-10,
) -> SpectrumReport:
    """Eigenvalues of ``op`` and the derived counts.

    Dense when the matrix has at most ``DENSE_LIMIT`` rows, otherwise
    shift-invert Arnoldi about ``lambda_hat / 2`` with enough eigenvalues to
    cover the disc reaching from there past the imaginary axis.

    ``re_tol`` and ``im_tol`` are ``rel_tol`` times the size of the
    zero-order (reaction) part of the operator; the second-difference part
    only sets the far-left spectrum. The zero cluster is centred on the
    eigenvalue of smallest modulus ``mu0``: it is counted when ``|mu0|`` is
    within the discretization error of the translation mode, and contains
    every eigenvalue within ``max(50 pulse_tol, 100 |mu0|)`` unless
    ``zero_radius`` is given.
    """
    mat = op.matrix
    scale = op.reaction_scale
    re_tol = rel_tol * scale
    im_tol = rel_tol * scale
    if op.size <= DENSE_LIMIT:
        ev = _all_eigenvalues(mat)
    else:
        if lambda_hat is None:
            if model is None or profile is None:
                raise SpectrumError("sparse mode needs lambda_hat (or model and profile)")
            lambda_hat = check_hypotheses(model, profile).lambda_hat
        shift = 0.5 * lambda_hat
        ev = _rightmost_eigenvalues(mat, radius=np.hypot(shift, shift) + 1e-9, shift=shift)
    ev = np.asarray(ev, dtype=complex)
    real_pos = (ev.real > re_tol) & (np.abs(ev.imag) < im_tol)
    zme = zero_mode_error(op, model, profile) if model is not None and profile is not None else float("nan")
    mu0 = float(np.min(np.abs(ev)))
    radius = zero_radius if zero_radius is not None else max(50 * pulse_tol, 1e2 * mu0)
    zero_tol = max(50 * pulse_tol, 10 * zme if np.isfinite(zme) else re_tol)
    in_cluster = (np.abs(ev) <= radius) & (mu0 <= zero_tol)
    cluster = int(np.sum(in_cluster))
    return SpectrumReport(
        eigenvalues=ev,
        n_plus=int(np.sum(real_pos & ~in_cluster)),
        zero_mode_error=zme,
        zero_simple=cluster == 1,
        re_tol=re_tol,
        im_tol=im_tol,
        zero_cluster=cluster,
        details={"zero_eigenvalue": mu0, "zero_radius": radius},
    )


def zero_mode_error(op: DiscreteOperator, model: SkewGradientModel, profile: PulseProfile) -> float:
    """``|L psi|_inf / |psi|_inf`` for ``psi = M^{1/2} w0'`` on the operator grid."""
    spline = profile.interpolator()
    wp = spline(op.x, 1)
    psi = op.field_to_vector(wp * np.sqrt(model.m))
    return float(np.max(np.abs(op.matrix @ psi)) / np.max(np.abs(psi)))


def essential_spectrum_ok(model: SkewGradientModel, lambda_probe_grid, profile: PulseProfile | None = None) -> bool:
    """True iff ``J A_lam(inf)`` is hyperbolic for every probed ``lam >= 0``."""
    probes = np.atleast_1d(np.asarray(lambda_probe_grid, dtype=float))
    if np.any(probes < 0):
        raise SpectrumError("lambda probes must be >= 0")
    dummy = profile if profile is not None else _rest_profile(model)
    fam = HamiltonianFamily(model, dummy)
    for lam in probes:
        try:
            asymptotic_split(fam.at(lam=lam))
        except NonHyperbolicError:
            return False
    return True


def _rest_profile(model):
    x = np.linspace(-1.0, 1.0, 3)
    return PulseProfile(x, np.zeros((3, model.n)), np.zeros((3, model.n)))


def _min_eigenvalue(sym: sp.spmatrix) -> float:
    """Smallest eigenvalue of a sparse symmetric matrix.

    Shift-invert just below the Gershgorin lower bound, so the nearest
    eigenvalue to the shift is the smallest one.
    """
    if sym.shape[0] <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(sym.toarray())[0])
    diag = sym.diagonal()
    off = np.asarray(abs(sym).sum(axis=1)).ravel() - np.abs(diag)
    shift = float(np.min(diag - off)) - 1.0
    val = eigsh(sym, k=1, sigma=shift, which="LM", return_eigenvectors=False)[0]
    return float(val)


def sufficiency_check(
    model: SkewGradientModel, profile: PulseProfile, grid=None, tol: float = 1e-8, order: int = 4
) -> tuple[bool, dict]:
    """Real-spectrum conditions ``-G2 > 0`` and ``I > G3 (-G2)^-2 G3^*`` for ``G = -Q L``.

    ``G`` is split into activator (``j`` components) and inhibitor blocks;
    ``G2`` is the inhibitor-inhibitor block and ``G3`` the coupling block.
    """
    op = discretize_L(model, profile, grid, order)
    m = op.x.size
    j = model.j
    qv = np.repeat(model.q, m)
    g = (-sp.diags(qv) @ op.matrix).tocsr()
    act = np.arange(j * m)
    inh = np.arange(j * m, model.n * m)
    details = {}
    if inh.size == 0:
        details["min_eig_minus_G2"] = None
        details["coupling_norm"] = 0.0
        ok = True
    else:
        g2 = g[inh][:, inh].tocsc()
        g3 = g[act][:, inh].tocsr()
        mg2 = (-0.5 * (g2 + g2.T)).tocsc()
        details["min_eig_minus_G2"] = _min_eigenvalue(mg2)
        if details["min_eig_minus_G2"] <= tol:
            raise SpectrumError(f"-G2 is not positive definite (min eigenvalue {details['min_eig_minus_G2']:.3e})")
        lu = splu((-g2).tocsc())

        def apply(y):
            # sym(G3 (-G2)^-2 G3^T) y
            a = g3 @ lu.solve(lu.solve(g3.T @ y))
            b = g3 @ lu.solve(lu.solve(g3.T @ y, trans="T"), trans="T")
            return 0.5 * (a + b)

        size = act.size
        if size <= DENSE_LIMIT:
            coupling = np.column_stack([apply(e) for e in np.eye(size)])
            top = float(np.linalg.eigvalsh(0.5 * (coupling + coupling.T))[-1])
        else:
            op_c = LinearOperator((size, size), matvec=apply, dtype=float)
            top = float(eigsh(op_c, k=1, which="LA", return_eigenvectors=False)[0])
        details["coupling_norm"] = top
        ok = top < 1 - tol
    if model.kind == "fhn":
        tau, gamma = model.params["tau"], model.params["gamma"]
        details["tau_lt_gamma_sq"] = bool(tau < gamma**2)
        ok = ok and details["tau_lt_gamma_sq"]
    return bool(ok), details


def spectrum_pipeline(
    model: SkewGradientModel,
    profile: PulseProfile,
    N: int | None = 2000,
    order: int = 4,
    rel_tol: float = 1e-6,
) -> SpectrumReport:
    """Eigenvalues plus the essential-spectrum and sufficiency checks."""
    hyp = check_hypotheses(model, profile)
    op = discretize_L(model, profile, N, order)
    rep = eigen_report(op, model, profile, lambda_hat=hyp.lambda_hat, rel_tol=rel_tol)
    rep.ess_bound_ok = essential_spectrum_ok(model, np.linspace(0.0, hyp.lambda_hat, 9))
    try:
        rep.sufficiency_ok, det = sufficiency_check(model, profile, N, order=order)
    except SpectrumError as exc:
        rep.sufficiency_ok, det = False, {"error": str(exc)}
    rep.details.update({"sufficiency": det, "lambda_hat": hyp.lambda_hat, "N": op.size // model.n + 1, "order": order})
    return rep
