"""Inner loops for inertia counting.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback.  The fallback is used when numba is missing or when the
environment variable ``TREE_SPECTRA_NUMBA`` is set to ``0``.  Both paths
implement the same recurrences and must return identical integers; the
test-suite runs them side by side.
"""

from __future__ import annotations

import os

import numpy as np

# |pivot| below ZERO_PIVOT * scale is a breakdown; it is replaced by
# -ZERO_PIVOT * scale and counted as negative (Sturm epsilon-shift).
ZERO_PIVOT = 1e-30


def _numba_requested() -> bool:
    return os.environ.get("TREE_SPECTRA_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by TREE_SPECTRA_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


def _sturm_shifts_nb(kdiag, koff, qdiag, a, b):
    n = kdiag.shape[0]
    m = a.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    closest = np.full(m, np.inf)
    for j in range(m):
        aj = a[j]
        bj = b[j]
        scale = 0.0
        for i in range(n):
            s = abs(aj * kdiag[i] - bj * qdiag[i])
            if i > 0:
                s += abs(aj * koff[i - 1])
            if i < n - 1:
                s += abs(aj * koff[i])
            if s > scale:
                scale = s
        if scale == 0.0:
            scale = 1.0
        tiny = ZERO_PIVOT * scale
        neg = 0
        pmin = np.inf
        piv = 1.0
        for i in range(n):
            d = aj * kdiag[i] - bj * qdiag[i]
            if i > 0:
                e = aj * koff[i - 1]
                d -= e * e / piv
            if abs(d) < tiny:
                d = -tiny
            if d < 0.0:
                neg += 1
            r = abs(d) / scale
            if r < pmin:
                pmin = r
            piv = d
        counts[j] = neg
        closest[j] = pmin
    return counts, closest


def _tree_inertia_nb(diag, parent, coupling):
    n = diag.shape[0]
    scale = 0.0
    for i in range(n):
        s = abs(diag[i]) + 2.0 * abs(coupling[i])
        if s > scale:
            scale = s
    if scale == 0.0:
        scale = 1.0
    tiny = ZERO_PIVOT * scale
    acc = np.zeros(n)
    neg = 0
    pmin = np.inf
    for i in range(n - 1, -1, -1):
        d = diag[i] - acc[i]
        if abs(d) < tiny:
            d = -tiny
        if d < 0.0:
            neg += 1
        r = abs(d) / scale
        if r < pmin:
            pmin = r
        p = parent[i]
        if p >= 0:
            acc[p] += coupling[i] * coupling[i] / d
    return neg, pmin


def _inverse_diagonal_nb(diag, off):
    n = diag.shape[0]
    fwd = np.empty(n)
    bwd = np.empty(n)
    fwd[0] = diag[0]
    for i in range(1, n):
        fwd[i] = diag[i] - off[i - 1] * off[i - 1] / fwd[i - 1]
    bwd[n - 1] = diag[n - 1]
    for i in range(n - 2, -1, -1):
        bwd[i] = diag[i] - off[i] * off[i] / bwd[i + 1]
    out = np.empty(n)
    for i in range(n):
        out[i] = 1.0 / (fwd[i] + bwd[i] - diag[i])
    return out


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _sturm_shifts_np(kdiag, koff, qdiag, a, b):
    # Vectorised across shifts; the recurrence itself stays sequential.
    n = kdiag.shape[0]
    d_all = a[:, None] * kdiag[None, :] - b[:, None] * qdiag[None, :]
    o_all = a[:, None] * koff[None, :]
    row = np.abs(d_all)
    if n > 1:
        row[:, 1:] += np.abs(o_all)
        row[:, :-1] += np.abs(o_all)
    scale = row.max(axis=1) if n else np.ones(a.shape[0])
    scale = np.where(scale == 0.0, 1.0, scale)
    tiny = ZERO_PIVOT * scale
    neg = np.zeros(a.shape[0], dtype=np.int64)
    pmin = np.full(a.shape[0], np.inf)
    piv = np.ones(a.shape[0])
    for i in range(n):
        d = d_all[:, i].copy()
        if i > 0:
            e = o_all[:, i - 1]
            d -= e * e / piv
        d = np.where(np.abs(d) < tiny, -tiny, d)
        neg += d < 0.0
        pmin = np.minimum(pmin, np.abs(d) / scale)
        piv = d
    return neg, pmin


def _tree_inertia_np(diag, parent, coupling):
    n = diag.shape[0]
    scale = float(np.max(np.abs(diag) + 2.0 * np.abs(coupling))) if n else 1.0
    if scale == 0.0:
        scale = 1.0
    tiny = ZERO_PIVOT * scale
    dg = diag.tolist()
    par = parent.tolist()
    cp = coupling.tolist()
    acc = [0.0] * n
    neg = 0
    pmin = np.inf
    for i in range(n - 1, -1, -1):
        d = dg[i] - acc[i]
        if abs(d) < tiny:
            d = -tiny
        if d < 0.0:
            neg += 1
        pmin = min(pmin, abs(d) / scale)
        p = par[i]
        if p >= 0:
            acc[p] += cp[i] * cp[i] / d
    return neg, pmin


def _inverse_diagonal_np(diag, off):
    n = diag.shape[0]
    dg = diag.tolist()
    of = off.tolist()
    fwd = [0.0] * n
    bwd = [0.0] * n
    fwd[0] = dg[0]
    for i in range(1, n):
        fwd[i] = dg[i] - of[i - 1] ** 2 / fwd[i - 1]
    bwd[n - 1] = dg[n - 1]
    for i in range(n - 2, -1, -1):
        bwd[i] = dg[i] - of[i] ** 2 / bwd[i + 1]
    return 1.0 / (np.asarray(fwd) + np.asarray(bwd) - diag)


if NUMBA_ENABLED:
    _sturm_shifts = njit(cache=True, nogil=True)(_sturm_shifts_nb)
    _tree_inertia = njit(cache=True, nogil=True)(_tree_inertia_nb)
    _inverse_diagonal = njit(cache=True, nogil=True)(_inverse_diagonal_nb)
else:
    _sturm_shifts = _sturm_shifts_np
    _tree_inertia = _tree_inertia_np
    _inverse_diagonal = _inverse_diagonal_np


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------


def pencil_inertia(kdiag, koff, qdiag, a, b):
    """Negative counts of ``a[j] * K - b[j] * Q`` for every shift pair.

    ``K`` is the symmetric tridiagonal matrix with diagonal ``kdiag`` and
    off-diagonal ``koff``; ``Q`` is diagonal.  Returns ``(counts, closest)``
    where ``closest[j]`` is the smallest ``|pivot| / scale`` met during the
    factorisation, a proximity-to-crossing indicator.
    """
    kdiag = np.ascontiguousarray(kdiag, dtype=np.float64)
    koff = np.ascontiguousarray(koff, dtype=np.float64)
    qdiag = np.ascontiguousarray(qdiag, dtype=np.float64)
    a = np.ascontiguousarray(np.atleast_1d(a), dtype=np.float64)
    b = np.ascontiguousarray(np.atleast_1d(b), dtype=np.float64)
    if kdiag.shape[0] == 0:
        return np.zeros(a.shape[0], dtype=np.int64), np.full(a.shape[0], np.inf)
    return _sturm_shifts(kdiag, koff, qdiag, a, b)


def tridiagonal_inertia(diag, off):
    """Number of negative eigenvalues of a symmetric tridiagonal matrix."""
    diag = np.asarray(diag, dtype=np.float64)
    counts, closest = pencil_inertia(diag, off, np.zeros_like(diag), 1.0, 0.0)
    return int(counts[0]), float(closest[0])


def tree_inertia(diag, parent, coupling):
    """Negative count of a symmetric matrix whose graph is a rooted tree.

    Nodes must be numbered so that ``parent[i] < i`` (``-1`` for the root);
    ``coupling[i]`` is the off-diagonal entry between ``i`` and its parent.
    Elimination runs from the leaves inwards, which produces no fill.
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    coupling = np.ascontiguousarray(coupling, dtype=np.float64)
    if diag.shape[0] == 0:
        return 0, np.inf
    neg, closest = _tree_inertia(diag, parent, coupling)
    return int(neg), float(closest)


def tridiagonal_inverse_diagonal(diag, off):
    """Diagonal of the inverse of a nonsingular symmetric tridiagonal matrix."""
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    off = np.ascontiguousarray(off, dtype=np.float64)
    if diag.shape[0] == 0:
        return np.zeros(0)
    return _inverse_diagonal(diag, off)
