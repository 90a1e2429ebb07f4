"""Exact matrix arithmetic over Z_q.

Matrices are plain ``int64`` numpy arrays. Residues are kept canonical in
``[0, modulus)``; small signed matrices (trapdoors, errors) are ordinary
integer arrays and are reduced on the way in.
"""

from functools import lru_cache

import numpy as np
import sympy

MAX_MODULUS = 1 << 32
_LIMB = 16
_LIMB_MASK = (1 << _LIMB) - 1


class CompositeModulus(ValueError):
    pass


class NotInvertible(ArithmeticError):
    pass


class NoSolution(ArithmeticError):
    pass


@lru_cache(maxsize=64)
def is_prime(q):
    return bool(sympy.isprime(int(q)))


def reduce(a, modulus):
    """Canonical residues of an integer array."""
    return np.mod(np.asarray(a, dtype=np.int64), modulus)


def centered(a, modulus):
    """Lift residues into ``[-(modulus // 2), modulus - modulus // 2)``."""
    a = reduce(a, modulus)
    return np.where(a >= (modulus + 1) // 2, a - modulus, a)


_FLOAT_EXACT = float(1 << 53)


def int_matmul(a, b):
    """Exact ``a @ b`` for integer arrays.

    Uses float64 BLAS when every partial sum provably stays below 2**53,
    and falls back to int64 otherwise.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return a @ b
    bound = float(np.abs(a).max()) * float(np.abs(b).max()) * a.shape[-1]
    if bound < _FLOAT_EXACT:
        return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)
    return a @ b


def _mulmod_float(a, b, modulus):
    # both operands split into 16-bit limbs; limb products are < 2**32 so
    # each float64 dot product is exact for inner dimensions up to 2**20
    a_lo = (a & _LIMB_MASK).astype(np.float64)
    a_hi = (a >> _LIMB).astype(np.float64)
    b_lo = (b & _LIMB_MASK).astype(np.float64)
    b_hi = (b >> _LIMB).astype(np.float64)
    ll = (a_lo @ b_lo).astype(np.int64) % modulus
    mid = ((a_lo @ b_hi).astype(np.int64) % modulus + (a_hi @ b_lo).astype(np.int64) % modulus) % modulus
    hh = (a_hi @ b_hi).astype(np.int64) % modulus
    hh = ((hh << _LIMB) % modulus + mid) % modulus
    return ((hh << _LIMB) % modulus + ll) % modulus


def mat_mul_mod(a, b, modulus):
    """``a @ b mod modulus`` without overflow.

    Operands are reduced to canonical residues, split into 16-bit limbs and
    multiplied in float64, where every partial sum is exact.
    """
    modulus = int(modulus)
    if not 1 < modulus <= MAX_MODULUS:
        raise ValueError(f"modulus {modulus} out of range")
    a = reduce(a, modulus)
    b = reduce(b, modulus)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    if a.shape[-1] > 1 << 20:
        raise ValueError("inner dimension too large")
    return _mulmod_float(a, b, modulus)


def _check_prime(q):
    # elimination multiplies two residues in int64
    if q > 1 << 31:
        raise ValueError(f"prime modulus {q} exceeds 2**31")
    if not is_prime(q):
        raise CompositeModulus(f"modulus {q} is not prime")


def _echelon(m, q, ncols):
    """In-place reduced row echelon form over Z_q on the first ``ncols`` columns.

    Pivot is the first row (lowest index) with a nonzero entry. Returns the
    pivot column list.
    """
    rows = m.shape[0]
    pivots = []
    r = 0
    for col in range(ncols):
        if r == rows:
            break
        nz = np.nonzero(m[r:, col])[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            m[[r, p]] = m[[p, r]]
        inv = pow(int(m[r, col]), -1, q)
        m[r] = (m[r] * inv) % q
        f = m[:, col].copy()
        f[r] = 0
        nzr = np.nonzero(f)[0]
        if nzr.size:
            m[nzr] = (m[nzr] - (f[nzr, None] * m[r]) % q) % q
        pivots.append(col)
        r += 1
    return pivots


def rank_mod_prime(a, q):
    _check_prime(q)
    m = reduce(a, q).copy()
    if m.ndim == 1:
        m = m[:, None]
    return len(_echelon(m, q, m.shape[1]))


def solve_mod_prime(a, v, q):
    """Some ``s`` with ``a @ s = v (mod q)``; free variables are set to zero.

    Raises :class:`NoSolution` when the system is inconsistent.
    """
    _check_prime(q)
    a = reduce(a, q)
    v = reduce(v, q)
    if a.shape[0] != v.shape[0]:
        raise ValueError("dimension mismatch")
    ncols = a.shape[1]
    m = np.concatenate([a, v.reshape(-1, 1)], axis=1)
    pivots = _echelon(m, q, ncols)
    r = len(pivots)
    if np.any(m[r:, ncols] != 0):
        raise NoSolution("system is inconsistent")
    s = np.zeros(ncols, dtype=np.int64)
    for i, col in enumerate(pivots):
        s[col] = m[i, ncols]
    return s


def invert_mod(h, q):
    """Inverse of a square matrix over Z_q (q prime)."""
    _check_prime(q)
    h = reduce(h, q)
    n = h.shape[0]
    if h.ndim != 2 or h.shape[1] != n:
        raise ValueError("matrix must be square")
    m = np.concatenate([h, np.eye(n, dtype=np.int64)], axis=1)
    pivots = _echelon(m, q, n)
    if len(pivots) < n:
        raise NotInvertible("matrix is singular mod q")
    return m[:, n:].copy()


def in_image_lattice(a, w, q):
    """Whether ``w`` lies in Lambda(a^T), i.e. ``w = a^T s (mod q)`` for some s."""
    try:
        solve_mod_prime(np.asarray(a).T, w, q)
    except NoSolution:
        return False
    return True
