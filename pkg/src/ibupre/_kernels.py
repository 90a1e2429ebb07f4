"""Hot sampling kernels with a numba path and a pure-numpy fallback.

Both paths consume randomness through the same counter-based hash, so for a
given key they return bit-identical results. Set ``IBUPRE_DISABLE_NUMBA=1``
before import (or call :func:`set_backend`) to force the numpy path.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

MASK64 = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STEP = np.uint64(0xD1B54A32D192ED03)
LEVEL = np.uint64(0x8CB92BA72F3D8DD7)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
SH30 = np.uint64(30)
SH27 = np.uint64(27)
SH31 = np.uint64(31)
SH11 = np.uint64(11)
INV53 = 2.0**-53

# rejection window half-width in units of s; excluded mass < exp(-pi * 4.5**2).
# Acceptance is rho(x) / rho(nearest integer), which never underflows.
TAIL = 4.5
MAX_ATTEMPTS = 1_000_000

_backend = "numpy" if (os.environ.get("IBUPRE_DISABLE_NUMBA") or not HAVE_NUMBA) else "numba"


class InternalSamplerFailure(RuntimeError):
    pass


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev


def level_keys(key, k):
    """Per-level sub-keys used by the gadget sampler."""
    out = np.empty(k, dtype=np.uint64)
    for i in range(k):
        out[i] = _mix64_int((key + (i + 1) * int(LEVEL)) & MASK64)
    return out


def _mix64_int(x):
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


# ---------------------------------------------------------------------------
# numpy path


def _mix64_np(x):
    x = x ^ (x >> SH30)
    x = x * M1
    x = x ^ (x >> SH27)
    x = x * M2
    return x ^ (x >> SH31)


def _window_np(c, s):
    lo = np.ceil(c - TAIL * s)
    hi = np.floor(c + TAIL * s)
    lo = np.minimum(lo, np.floor(c))
    hi = np.maximum(hi, np.ceil(c))
    return lo, hi


def _sample_z_np(centers, sigmas, bases):
    n = centers.shape[0]
    out = np.zeros(n, dtype=np.int64)
    lo, hi = _window_np(centers, sigmas)
    width = (hi - lo + 1.0).astype(np.uint64)
    pending = np.arange(n)
    attempt = 0
    with np.errstate(over="ignore"):
        while pending.size:
            if attempt >= MAX_ATTEMPTS:
                raise InternalSamplerFailure("rejection sampler exceeded attempt limit")
            b = bases[pending]
            s1 = np.uint64((int(STEP) * (2 * attempt + 1)) & MASK64)
            s2 = np.uint64((int(STEP) * (2 * attempt + 2)) & MASK64)
            h1 = _mix64_np(b + s1)
            h2 = _mix64_np(b + s2)
            x = lo[pending] + (h1 % width[pending]).astype(np.float64)
            cp = centers[pending]
            sp = sigmas[pending]
            d0 = np.minimum(cp - np.floor(cp), np.ceil(cp) - cp)
            expo = ((x - cp) * (x - cp) - d0 * d0) / (sp * sp)
            u = (h2 >> SH11).astype(np.float64) * INV53
            ok = u < np.exp(-math.pi * expo)
            out[pending[ok]] = x[ok].astype(np.int64)
            pending = pending[~ok]
            attempt += 1
    return out


def _element_bases_np(key, n):
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(key) + GOLDEN * idx)


def _gadget_np(v, S, St, inv_nrm2, sig, keys):
    n = v.shape[0]
    k = S.shape[0]
    bits = (v[:, None] >> np.arange(k, dtype=np.int64)) & 1
    x = bits.astype(np.int64)
    c = bits.astype(np.float64)
    for i in range(k - 1, -1, -1):
        acc = np.zeros(n)
        for l in range(k):
            acc += c[:, l] * St[l, i]
        d = acc * inv_nrm2[i]
        z = _sample_z_np(d, np.full(n, sig[i]), _element_bases_np(int(keys[i]), n))
        for l in range(k):
            if S[l, i] != 0:
                step = z * S[l, i]
                c[:, l] -= step
                x[:, l] -= step
    return x


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _mix64_nb(x):
        x ^= x >> SH30
        x *= M1
        x ^= x >> SH27
        x *= M2
        x ^= x >> SH31
        return x

    @njit(cache=True)
    def _sample_one_nb(c, s, base):
        lo = min(math.ceil(c - TAIL * s), math.floor(c))
        hi = max(math.floor(c + TAIL * s), math.ceil(c))
        width = np.uint64(hi - lo + 1.0)
        d0 = min(c - math.floor(c), math.ceil(c) - c)
        for a in range(MAX_ATTEMPTS):
            h1 = _mix64_nb(base + STEP * np.uint64(2 * a + 1))
            h2 = _mix64_nb(base + STEP * np.uint64(2 * a + 2))
            x = lo + np.float64(h1 % width)
            expo = ((x - c) * (x - c) - d0 * d0) / (s * s)
            u = np.float64(h2 >> SH11) * INV53
            if u < math.exp(-math.pi * expo):
                return np.int64(x), True
        return np.int64(0), False

    @njit(cache=True)
    def _sample_z_nb(centers, sigmas, key, out):
        ok_all = True
        for j in range(centers.shape[0]):
            base = _mix64_nb(key + GOLDEN * np.uint64(j + 1))
            x, ok = _sample_one_nb(centers[j], sigmas[j], base)
            out[j] = x
            ok_all = ok_all and ok
        return ok_all

    @njit(cache=True)
    def _gadget_nb(v, S, St, inv_nrm2, sig, keys, out):
        n = v.shape[0]
        k = S.shape[0]
        c = np.empty(k)
        ok_all = True
        for j in range(n):
            val = v[j]
            for l in range(k):
                bit = (val >> l) & 1
                c[l] = np.float64(bit)
                out[j, l] = bit
            for i in range(k - 1, -1, -1):
                acc = 0.0
                for l in range(k):
                    acc += c[l] * St[l, i]
                d = acc * inv_nrm2[i]
                base = _mix64_nb(keys[i] + GOLDEN * np.uint64(j + 1))
                z, ok = _sample_one_nb(d, sig[i], base)
                ok_all = ok_all and ok
                for l in range(k):
                    if S[l, i] != 0:
                        step = z * S[l, i]
                        c[l] -= step
                        out[j, l] -= step
        return ok_all


# ---------------------------------------------------------------------------
# dispatch


def sample_z_batch(centers, sigmas, key):
    """One integer Gaussian sample per (center, s) pair; ``key`` is a 64-bit int."""
    centers = np.ascontiguousarray(centers, dtype=np.float64).ravel()
    sigmas = np.ascontiguousarray(np.broadcast_to(sigmas, centers.shape), dtype=np.float64)
    if np.any(sigmas <= 0):
        raise ValueError("Gaussian parameter must be positive")
    if _backend == "numba":
        out = np.empty(centers.shape[0], dtype=np.int64)
        if not _sample_z_nb(centers, sigmas, np.uint64(key), out):
            raise InternalSamplerFailure("rejection sampler exceeded attempt limit")
        return out
    return _sample_z_np(centers, sigmas, _element_bases_np(key, centers.shape[0]))


def gadget_sample_batch(v, S, St, inv_nrm2, sig, key):
    """Sample x in Z^k with g.x = v (mod q) for each syndrome in ``v``.

    ``S`` is the integer basis of the kernel lattice, ``St`` its Gram-Schmidt
    vectors (columns), ``sig`` the per-level parameters s / ||s~_i||.
    """
    v = np.ascontiguousarray(v, dtype=np.int64).ravel()
    keys = level_keys(key, S.shape[0])
    if _backend == "numba":
        out = np.empty((v.shape[0], S.shape[0]), dtype=np.int64)
        if not _gadget_nb(v, S, St, inv_nrm2, sig, keys, out):
            raise InternalSamplerFailure("rejection sampler exceeded attempt limit")
        return out
    return _gadget_np(v, S, St, inv_nrm2, sig, keys)
