"""Banded symmetric kernels: batched LDL^T inertia and the generalized banded eigensolver.

Band storage is LAPACK lower form: ``ab[k, j] = A[j + k, j]`` for ``k = 0..b``.
"""

from __future__ import annotations

import ctypes

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cython_lapack

from .errors import NumericalError

EPS = np.finfo(float).eps


def band_from_sparse(a: sp.spmatrix, b: int | None = None) -> np.ndarray:
    a = sp.csr_matrix(a)
    n = a.shape[0]
    if b is None:
        coo = a.tocoo()
        b = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    ab = np.zeros((b + 1, n))
    for k in range(b + 1):
        ab[k, : n - k] = a.diagonal(-k)
    return ab


def band_from_dense(a: np.ndarray, b: int | None = None) -> np.ndarray:
    n = a.shape[0]
    if b is None:
        b = bandwidth_dense(a)
    ab = np.zeros((b + 1, n))
    for k in range(b + 1):
        ab[k, : n - k] = np.diagonal(a, -k)
    return ab


def dense_from_band(ab: np.ndarray) -> np.ndarray:
    b1, n = ab.shape
    out = np.zeros((n, n))
    for k in range(b1):
        idx = np.arange(n - k)
        out[idx + k, idx] = ab[k, : n - k]
        out[idx, idx + k] = ab[k, : n - k]
    return out


def bandwidth_dense(a: np.ndarray) -> int:
    i, j = np.nonzero(a)
    return int(np.max(np.abs(i - j))) if i.size else 0


def _row_band(ab: np.ndarray) -> np.ndarray:
    """``R[t, m] = A[t, t - b + m]`` (``m = b`` is the diagonal), zero-padded."""
    b1, n = ab.shape
    b = b1 - 1
    R = np.zeros((n, b1))
    for m in range(b1):
        k = b - m
        R[k:, m] = ab[k, : n - k]
    return R


def band_norm(ab: np.ndarray) -> float:
    """Max absolute row sum of the symmetric band matrix."""
    b1, n = ab.shape
    rows = np.abs(ab).sum(axis=0)
    for k in range(1, b1):
        rows[k:] += np.abs(ab[k, : n - k])
    return float(rows.max()) if n else 0.0


def negative_inertia(ab: np.ndarray, shifts, bb: np.ndarray | None = None):
    """Number of negative pivots of ``A - s*B`` for every shift ``s``.

    Unpivoted LDL^T on the band, vectorized over shifts: a dense active window of
    order ``b + 1`` slides down the diagonal. Returns ``(counts, breakdown)``;
    ``breakdown[i]`` flags a pivot below ``n * eps * (|A| + |s||B|)``.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    b1, n = ab.shape
    b = b1 - 1
    s = shifts.size
    if bb is None:
        bb = np.zeros((b1, n))
        bb[0] = 1.0
    elif bb.shape[0] < b1:
        bb = np.vstack([bb, np.zeros((b1 - bb.shape[0], n))])
    elif bb.shape[0] > b1:
        raise ValueError("B bandwidth must not exceed A bandwidth")
    RA, RB = _row_band(ab), _row_band(bb)
    tiny = n * EPS * (band_norm(ab) + np.abs(shifts) * band_norm(bb))

    def row(t):
        # entries (t, t-b .. t) of A - s*B, one row per shift
        return RA[t][None, :] - shifts[:, None] * RB[t][None, :]

    W = np.zeros((s, b1, b1))
    for t in range(min(b1, n)):
        r = row(t)
        lo = max(0, t - b)
        W[:, t, lo : t + 1] = r[:, b - (t - lo) :]
        W[:, lo : t + 1, t] = r[:, b - (t - lo) :]
    neg = np.zeros(s, dtype=np.int64)
    broke = np.zeros(s, dtype=bool)
    for j in range(n):
        p = W[:, 0, 0].copy()
        bad = np.abs(p) <= tiny
        broke |= bad
        p[bad] = np.where(p[bad] < 0, -1.0, 1.0) * np.maximum(tiny[bad], EPS)
        neg += p < 0
        if b == 0:
            t = j + 1
            if t < n:
                W[:, 0, 0] = row(t)[:, 0]
            continue
        v = W[:, 1:, 0]
        W[:, :b, :b] = W[:, 1:, 1:] - v[:, :, None] * (v / p[:, None])[:, None, :]
        t = j + b1
        if t < n:
            r = row(t)
            W[:, b, :] = r
            W[:, :, b] = r
        else:
            W[:, b, :] = 0.0
            W[:, :, b] = 0.0
    return neg, broke


# ---------------------------------------------------------------------------
# LAPACK dsbgvx through scipy's cython_lapack capsule

_P = ctypes.c_void_p
_dsbgvx = None


def _lapack_dsbgvx():
    global _dsbgvx
    if _dsbgvx is None:
        cap = cython_lapack.__pyx_capi__["dsbgvx"]
        get_name = ctypes.pythonapi.PyCapsule_GetName
        get_name.restype = ctypes.c_char_p
        get_name.argtypes = [ctypes.py_object]
        get_ptr = ctypes.pythonapi.PyCapsule_GetPointer
        get_ptr.restype = ctypes.c_void_p
        get_ptr.argtypes = [ctypes.py_object, ctypes.c_char_p]
        ptr = get_ptr(cap, get_name(cap))
        _dsbgvx = ctypes.CFUNCTYPE(None, *([_P] * 25))(ptr)
    return _dsbgvx


def generalized_band_eigh(ab: np.ndarray, bb: np.ndarray, vl: float, vu: float, vectors: bool = False):
    """Eigenpairs of ``A x = lam B x`` with ``lam`` in ``(vl, vu]``; ``B`` positive definite.

    Eigenvectors are B-orthonormal columns.
    """
    n = ab.shape[1]
    ka, kb = ab.shape[0] - 1, bb.shape[0] - 1
    if kb > ka:
        ab = np.vstack([ab, np.zeros((kb - ka, n))])
        ka = kb
    a = np.array(ab, dtype=float, order="F")
    bm = np.array(bb, dtype=float, order="F")
    ld = n if vectors else 1
    q = np.zeros((ld, n if vectors else 1), order="F")
    z = np.zeros((ld, n if vectors else 1), order="F")
    w = np.zeros(n)
    work = np.zeros(7 * n)
    iwork = np.zeros(5 * n, dtype=np.int32)
    ifail = np.zeros(n, dtype=np.int32)
    m = ctypes.c_int(0)
    info = ctypes.c_int(0)

    def i(x):
        return ctypes.byref(ctypes.c_int(x))

    def dbl(x):
        return ctypes.byref(ctypes.c_double(x))

    # eigenvalues only: the full tridiagonal QR sweep beats bisection for many roots
    jobz = ctypes.c_char_p(b"V" if vectors else b"N")
    rng = ctypes.c_char_p(b"V" if vectors else b"A")
    _lapack_dsbgvx()(
        jobz, rng, ctypes.c_char_p(b"L"), i(n), i(ka), i(kb),
        a.ctypes.data_as(_P), i(ka + 1), bm.ctypes.data_as(_P), i(kb + 1),
        q.ctypes.data_as(_P), i(ld), dbl(vl), dbl(vu), i(0), i(0), dbl(0.0),
        ctypes.byref(m), w.ctypes.data_as(_P), z.ctypes.data_as(_P), i(ld),
        work.ctypes.data_as(_P), iwork.ctypes.data_as(_P), ifail.ctypes.data_as(_P),
        ctypes.byref(info),
    )
    if info.value > n:
        raise NumericalError("mass matrix is not positive definite")
    if info.value != 0:
        raise NumericalError(f"dsbgvx failed with info={info.value}")
    k = m.value
    if vectors:
        return w[:k].copy(), z[:, :k].copy()
    w = w[:k]
    return w[(w > vl) & (w <= vu)].copy()
