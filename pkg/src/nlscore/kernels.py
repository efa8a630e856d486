"""Low-level numeric kernels: counter-based random bits, Gaussian draws, and
a cyclic-Jacobi symmetric eigensolver.

Two interchangeable implementations exist for each kernel: a numba-compiled
fast path and a pure-numpy fallback. Selection happens once at import time
via the NLSCORE_BACKEND environment variable:

    NLSCORE_BACKEND=numba   require numba (error if not importable)
    NLSCORE_BACKEND=numpy   force the pure-numpy fallback
    unset / "auto"          numba when importable, numpy otherwise

The random bit generator is SplitMix64 used in counter mode: output i of a
stream with 64-bit key k is ``mix64(k + (i + 1) * GOLDEN)``, a pure function
of (key, counter). Every array element can therefore be produced
independently of the others, which is what makes per-cell parallelism and
the numpy/numba twin implementations produce identical streams.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "GOLDEN",
    "mix64",
    "fnv1a64",
    "raw_stream",
    "gaussian_pairs",
    "jacobi_eigh",
    "raw_stream_numpy",
    "gaussian_pairs_numpy",
    "load_numba_impls",
]

GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1

# uint64 constants shared by both implementations
_U_GOLDEN = np.uint64(GOLDEN)
_U_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U_MIX2 = np.uint64(0x94D049BB133111EB)
_U_30 = np.uint64(30)
_U_27 = np.uint64(27)
_U_31 = np.uint64(31)
_U_11 = np.uint64(11)
_U_1 = np.uint64(1)

_TWO_NEG53 = 1.1102230246251565e-16  # 2**-53
_TAU = 6.283185307179586  # 2*pi


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a python int (exact 64-bit wraparound)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; used to turn string labels into stream labels."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def raw_stream_numpy(key: int, start: int, count: int) -> np.ndarray:
    """uint64 outputs at counters start..start+count-1 of stream `key`."""
    if count <= 0:
        return np.empty(0, dtype=np.uint64)
    idx = np.uint64((start + 1) & _MASK64) + np.arange(count, dtype=np.uint64)
    z = np.uint64(key & _MASK64) + idx * _U_GOLDEN
    z = (z ^ (z >> _U_30)) * _U_MIX1
    z = (z ^ (z >> _U_27)) * _U_MIX2
    return z ^ (z >> _U_31)


def gaussian_pairs_numpy(key: int, start: int, n_pairs: int) -> np.ndarray:
    """2*n_pairs standard normals via Box-Muller on the counter stream.

    Pair p consumes counters (start + 2p, start + 2p + 1); the mapping from
    array position to counter is fixed, so there is no rejection step that
    could desynchronise streams.
    """
    if n_pairs <= 0:
        return np.empty(0, dtype=np.float64)
    bits = raw_stream_numpy(key, start, 2 * n_pairs)
    u = ((bits >> _U_11).astype(np.float64) + 1.0) * _TWO_NEG53  # (0, 1]
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    a = _TAU * u[1::2]
    out = np.empty(2 * n_pairs, dtype=np.float64)
    out[0::2] = r * np.cos(a)
    out[1::2] = r * np.sin(a)
    return out


def _jacobi_numpy(a: np.ndarray, v: np.ndarray, tol: float, max_sweeps: int) -> int:
    """Cyclic Jacobi diagonalization, in place. Returns sweeps used, -1 if
    the off-diagonal Frobenius norm never dropped below tol * ||A||_F."""
    d = a.shape[0]
    if d < 2:
        return 0
    limit = tol * max(float(np.linalg.norm(a)), np.finfo(float).tiny)
    for sweep in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
        if off <= limit:
            return sweep
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(1.0 + theta * theta)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
    return max_sweeps if off <= limit else -1


# ---------------------------------------------------------------------------
# numba fast path
# ---------------------------------------------------------------------------


def load_numba_impls() -> dict:
    """Compile and return the numba kernels; raises ImportError without numba.

    Exposed separately from backend selection so benchmarks and tests can
    exercise both implementations in one process.
    """
    from numba import njit  # deferred so the numpy backend never imports it

    @njit(cache=True)
    def _raw_fill(key, start, out):
        for i in range(out.size):
            z = key + (start + np.uint64(i) + _U_1) * _U_GOLDEN
            z = (z ^ (z >> _U_30)) * _U_MIX1
            z = (z ^ (z >> _U_27)) * _U_MIX2
            out[i] = z ^ (z >> _U_31)

    @njit(cache=True)
    def _gauss_fill(key, start, out):
        n_pairs = out.size // 2
        for p in range(n_pairs):
            c0 = start + np.uint64(2 * p) + _U_1
            z = key + c0 * _U_GOLDEN
            z = (z ^ (z >> _U_30)) * _U_MIX1
            z = (z ^ (z >> _U_27)) * _U_MIX2
            z = z ^ (z >> _U_31)
            u1 = (float(z >> _U_11) + 1.0) * _TWO_NEG53
            w = key + (c0 + _U_1) * _U_GOLDEN
            w = (w ^ (w >> _U_30)) * _U_MIX1
            w = (w ^ (w >> _U_27)) * _U_MIX2
            w = w ^ (w >> _U_31)
            u2 = (float(w >> _U_11) + 1.0) * _TWO_NEG53
            r = math.sqrt(-2.0 * math.log(u1))
            a = _TAU * u2
            out[2 * p] = r * math.cos(a)
            out[2 * p + 1] = r * math.sin(a)

    @njit(cache=True)
    def _jacobi(a, v, tol, max_sweeps):
        d = a.shape[0]
        if d < 2:
            return 0
        fro = 0.0
        for i in range(d):
            for j in range(d):
                fro += a[i, j] * a[i, j]
        limit = tol * max(math.sqrt(fro), 2.2250738585072014e-308)
        for sweep in range(max_sweeps):
            off = 0.0
            for i in range(d - 1):
                for j in range(i + 1, d):
                    off += a[i, j] * a[i, j]
            if math.sqrt(2.0 * off) <= limit:
                return sweep
            for p in range(d - 1):
                for q in range(p + 1, d):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(1.0 + theta * theta)
                    )
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    for r in range(d):
                        rp = a[p, r]
                        rq = a[q, r]
                        a[p, r] = c * rp - s * rq
                        a[q, r] = s * rp + c * rq
                    for r in range(d):
                        cp = a[r, p]
                        cq = a[r, q]
                        a[r, p] = c * cp - s * cq
                        a[r, q] = s * cp + c * cq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for r in range(d):
                        vp = v[r, p]
                        vq = v[r, q]
                        v[r, p] = c * vp - s * vq
                        v[r, q] = s * vp + c * vq
        off = 0.0
        for i in range(d - 1):
            for j in range(i + 1, d):
                off += a[i, j] * a[i, j]
        return max_sweeps if math.sqrt(2.0 * off) <= limit else -1

    def raw_stream_numba(key, start, count):
        out = np.empty(count, dtype=np.uint64)
        if count > 0:
            _raw_fill(np.uint64(key & _MASK64), np.uint64(start & _MASK64), out)
        return out

    def gaussian_pairs_numba(key, start, n_pairs):
        out = np.empty(2 * n_pairs if n_pairs > 0 else 0, dtype=np.float64)
        if n_pairs > 0:
            _gauss_fill(np.uint64(key & _MASK64), np.uint64(start & _MASK64), out)
        return out

    return {
        "raw_stream": raw_stream_numba,
        "gaussian_pairs": gaussian_pairs_numba,
        "jacobi": _jacobi,
    }


def _select_backend() -> str:
    choice = os.environ.get("NLSCORE_BACKEND", "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise RuntimeError(
            f"NLSCORE_BACKEND must be 'numba', 'numpy' or unset, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError("NLSCORE_BACKEND=numba but numba is not installed")
        return "numpy"
    return "numba"


BACKEND = _select_backend()

if BACKEND == "numba":
    _impls = load_numba_impls()
    raw_stream = _impls["raw_stream"]
    gaussian_pairs = _impls["gaussian_pairs"]
    _jacobi_kernel = _impls["jacobi"]
else:
    raw_stream = raw_stream_numpy
    gaussian_pairs = gaussian_pairs_numpy
    _jacobi_kernel = _jacobi_numpy


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues w sorted descending and A = V diag(w) V^T.
    Column signs are fixed so the largest-magnitude entry of each eigenvector
    is positive, making the output deterministic. `tol` is relative to the
    Frobenius norm of the input.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    v = np.eye(d)
    sweeps = _jacobi_kernel(a, v, float(tol), int(max_sweeps))
    if sweeps < 0:
        raise RuntimeError(
            f"Jacobi eigendecomposition did not converge in {max_sweeps} sweeps"
        )
    w = np.diagonal(a).copy()
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for j in range(d):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]
    return w, v
