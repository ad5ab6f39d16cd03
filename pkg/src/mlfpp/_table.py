"""Build and cache the Chebyshev table used by the fast evaluation path.

The table holds, for each (beta, log u) cell, a tensor Chebyshev expansion of
``R = (G - exp(-u)) / (1 - beta)`` fitted at Chebyshev-Gauss nodes from the
exact kernel. Building takes several seconds on one core, so the result is
cached as ``.npy`` under ``$MLFPP_CACHE_DIR`` (default ``~/.cache/mlfpp``).
The computation is deterministic, so a cached table and a fresh one agree
bit for bit.
"""

import hashlib
import os
import threading
from pathlib import Path

import numpy as np

from . import _kernels as K

_LOCK = threading.Lock()
_TABLE = None
EMPTY_TABLE = np.zeros((0, 0, 0, 0))


def _signature():
    parts = (K.TAB_BETA0, K.TAB_DBETA, K.TAB_NBETA, K.TAB_Y0, K.TAB_DY, K.TAB_NY, K.TAB_DEG, 2)
    return hashlib.sha1(repr(parts).encode()).hexdigest()[:12]


def _cache_path():
    root = os.environ.get("MLFPP_CACHE_DIR")
    base = Path(root) if root else Path.home() / ".cache" / "mlfpp"
    return base / f"mlf_table_{_signature()}.npy"


def build_table():
    """Compute the coefficient array from scratch (shape nb x ny x n x n)."""
    n = K.TAB_DEG
    x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    b0 = K.TAB_BETA0 + K.TAB_DBETA * np.arange(K.TAB_NBETA)
    y0 = K.TAB_Y0 + K.TAB_DY * np.arange(K.TAB_NY)
    betas = b0[:, None] + K.TAB_DBETA * (x[None, :] + 1.0) / 2.0
    ys = y0[:, None] + K.TAB_DY * (x[None, :] + 1.0) / 2.0
    vals = np.empty((K.TAB_NBETA, K.TAB_NY, n, n))
    bad = K.fill_table_values(betas, ys, vals)
    if bad:
        raise RuntimeError(f"{bad} table nodes failed to converge")
    # discrete Chebyshev transform at Gauss nodes
    k = np.arange(n)
    T = np.cos(np.outer(k, np.arccos(x)))  # T[k, node]
    inv = (2.0 / n) * T
    inv[0] *= 0.5
    # coefficients: A = inv @ V @ inv.T for each cell
    return np.einsum("ai,bcij,dj->bcad", inv, vals, inv, optimize=True)


def get_table():
    """Return the cached table, building it on first use."""
    global _TABLE
    if _TABLE is not None:
        return _TABLE
    with _LOCK:
        if _TABLE is not None:
            return _TABLE
        path = _cache_path()
        tab = None
        if path.exists():
            try:
                tab = np.load(path)
                if tab.shape != (K.TAB_NBETA, K.TAB_NY, K.TAB_DEG, K.TAB_DEG):
                    tab = None
            except (OSError, ValueError):
                tab = None
        if tab is None:
            tab = build_table()
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{os.getpid()}.tmp")
                with open(tmp, "wb") as fh:
                    np.save(fh, tab)
                os.replace(tmp, path)
            except OSError:
                pass
        _TABLE = np.ascontiguousarray(tab)
        return _TABLE
