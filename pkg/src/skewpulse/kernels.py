"""Hot numeric loops.

Two kernels dominate runtime: the frame sweep that transports a Lagrangian
frame along ``z' = J A(x) z`` (called once per spectral parameter and per
crossing refinement), and the tridiagonal solves inside the time stepper.
Both have a numba path and a numpy/scipy path; ``_accel.USE_NUMBA`` picks one.
"""

import numpy as np
from scipy.linalg import solve_banded

from ._accel import USE_NUMBA, njit

# two-stage Gauss-Legendre tableau (order 4, symplectic)
_S3 = np.sqrt(3.0)
GAUSS_C1 = 0.5 - _S3 / 6.0
GAUSS_C2 = 0.5 + _S3 / 6.0
_A11 = 0.25
_A12 = 0.25 - _S3 / 6.0
_A21 = 0.25 + _S3 / 6.0
_A22 = 0.25


@njit
def _hamiltonian_generator(b, lam, eps, qd_inv, qm):
    """J A for A = diag((QD)^-1, B - eps I - lam QM), with J = [[0, -I], [I, 0]]."""
    n = b.shape[0]
    k = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            r = b[i, j]
            if i == j:
                r -= eps + lam * qm[i]
            k[i, n + j] = -r
        k[n + i, i] = qd_inv[i]
    return k


@njit
def _orthonormalize(z):
    q, r = np.linalg.qr(z)
    for j in range(r.shape[0]):
        if r[j, j] < 0.0:
            for i in range(q.shape[0]):
                q[i, j] = -q[i, j]
    return q


@njit
def _isotropy(z):
    n = z.shape[1]
    worst = 0.0
    for a in range(n):
        for b in range(n):
            s = 0.0
            for i in range(n):
                s += z[n + i, a] * z[i, b] - z[i, a] * z[n + i, b]
            if abs(s) > worst:
                worst = abs(s)
    return worst


@njit
def frame_sweep(z0, b_stage1, b_stage2, hs, lam, eps, qd_inv, qm, record):
    """Transport the column span of ``z0`` over ``len(hs)`` Gauss steps.

    ``b_stage1[k]``/``b_stage2[k]`` hold B at the two collocation nodes of
    step k; ``hs[k]`` is the signed step (negative for backward sweeps). The frame is
    re-orthonormalized by thin QR after every step. Returns the recorded
    frames (all steps when ``record`` else only the last) and the largest
    isotropy defect seen.
    """
    n = z0.shape[1]
    nsteps = b_stage1.shape[0]
    nout = nsteps + 1 if record else 1
    out = np.empty((nout, 2 * n, n))
    z = np.ascontiguousarray(_orthonormalize(z0.copy()))
    if record:
        out[0] = z
    eye = np.eye(2 * n)
    big = np.empty((4 * n, 4 * n))
    rhs = np.empty((4 * n, n))
    worst = _isotropy(z)
    for step in range(nsteps):
        h = hs[step]
        k1 = _hamiltonian_generator(b_stage1[step], lam, eps, qd_inv, qm)
        k2 = _hamiltonian_generator(b_stage2[step], lam, eps, qd_inv, qm)
        big[: 2 * n, : 2 * n] = eye - h * _A11 * k1
        big[: 2 * n, 2 * n :] = -h * _A12 * k1
        big[2 * n :, : 2 * n] = -h * _A21 * k2
        big[2 * n :, 2 * n :] = eye - h * _A22 * k2
        rhs[: 2 * n] = k1 @ z
        rhs[2 * n :] = k2 @ z
        stages = np.linalg.solve(big, rhs)
        z = np.ascontiguousarray(_orthonormalize(z + 0.5 * h * (stages[: 2 * n] + stages[2 * n :])))
        iso = _isotropy(z)
        if iso > worst:
            worst = iso
        if record:
            out[step + 1] = z
    if not record:
        out[0] = z
    return out, worst


@njit
def _thomas_numba(lower, diag, upper, rhs):
    """Solve a tridiagonal system for every column of ``rhs``."""
    m = diag.shape[0]
    ncol = rhs.shape[1]
    c = np.empty(m)
    x = np.empty((m, ncol))
    d = np.empty((m, ncol))
    c[0] = upper[0] / diag[0]
    for j in range(ncol):
        d[0, j] = rhs[0, j] / diag[0]
    for i in range(1, m):
        denom = diag[i] - lower[i] * c[i - 1]
        if i < m - 1:
            c[i] = upper[i] / denom
        for j in range(ncol):
            d[i, j] = (rhs[i, j] - lower[i] * d[i - 1, j]) / denom
    for j in range(ncol):
        x[m - 1, j] = d[m - 1, j]
    for i in range(m - 2, -1, -1):
        for j in range(ncol):
            x[i, j] = d[i, j] - c[i] * x[i + 1, j]
    return x


def tridiagonal_solve(lower, diag, upper, rhs):
    """Solve ``T x = rhs`` with ``T`` given by its three diagonals.

    ``lower[i]`` multiplies ``x[i-1]`` in row i (``lower[0]`` unused),
    ``upper[i]`` multiplies ``x[i+1]`` (``upper[-1]`` unused).
    """
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    if squeeze:
        rhs = rhs[:, None]
    if USE_NUMBA:
        x = _thomas_numba(lower, diag, upper, np.ascontiguousarray(rhs))
    else:
        ab = np.zeros((3, diag.shape[0]))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        x = solve_banded((1, 1), ab, rhs)
    return x[:, 0] if squeeze else x
