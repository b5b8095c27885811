"""Hot numeric kernels.

The quadratic LCS table behind ROUGE-L dominates large evaluation runs and
is compiled with numba (~190x over the Python loop on 1k-token pairs). Set
CITEGAUGE_NO_NUMBA=1 to force the pure-Python fallback; results are
identical either way (benchmarks/bench_kernels.py compares the paths).

The 4-D attention-alignment reduction stays on numpy fancy indexing: the
measured numba loop was 2-5x slower than the vectorized gather, so there is
no jitted variant to select.
"""

from __future__ import annotations

import os

import numpy as np


def _lcs_length_py(a: np.ndarray, b: np.ndarray) -> int:
    """Longest common subsequence length over two int64 id arrays."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = np.zeros(m + 1, dtype=np.int64)
    curr = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            else:
                curr[j + 1] = max(prev[j + 1], curr[j])
        prev, curr = curr, prev
    return int(prev[m])


def alignment_mean(weights: np.ndarray, cited: np.ndarray) -> float:
    """Mean attention weight over all (layer, head, out, cited-index) cells."""
    cited = np.ascontiguousarray(cited, dtype=np.int64)
    if cited.size == 0:
        return 0.0
    return float(weights[:, :, :, cited].mean(dtype=np.float64))


USE_NUMBA = os.environ.get("CITEGAUGE_NO_NUMBA", "") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:
        USE_NUMBA = False

if USE_NUMBA:

    @njit(cache=True)
    def _lcs_length_nb(a, b):
        n, m = len(a), len(b)
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, dtype=np.int64)
        curr = np.zeros(m + 1, dtype=np.int64)
        for i in range(n):
            ai = a[i]
            for j in range(m):
                if ai == b[j]:
                    curr[j + 1] = prev[j] + 1
                else:
                    c = curr[j]
                    p = prev[j + 1]
                    curr[j + 1] = c if c > p else p
            tmp = prev
            prev = curr
            curr = tmp
        return int(prev[m])

    def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
        return _lcs_length_nb(
            np.ascontiguousarray(a, dtype=np.int64),
            np.ascontiguousarray(b, dtype=np.int64),
        )

else:

    def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
        return _lcs_length_py(
            np.ascontiguousarray(a, dtype=np.int64),
            np.ascontiguousarray(b, dtype=np.int64),
        )
