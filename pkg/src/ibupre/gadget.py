"""Base-2 gadget G = I_n (x) (1, 2, ..., 2^(k-1)) over a prime modulus.

Provides LWE inversion for G, Gaussian sampling on cosets of Lambda^perp(G),
and the message codec over Lambda(G^T) / 2 Lambda(G^T).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .modmath import centered, is_prime, reduce


class InvalidModulus(ValueError):
    pass


class GadgetInversionError(ArithmeticError):
    pass


class CodecError(ValueError):
    pass


def _solve_st(bits, q, c):
    """Exact integer solution y of S^T y = c for the base-2 basis S.

    Rows 0..k-2 of S^T read 2 y_i - y_{i+1}; the last row is the bit vector
    of q. Works on Python ints, so nothing overflows.
    """
    k = len(bits)
    d = [0] * k
    for i in range(k - 1):
        d[i + 1] = 2 * d[i] + c[i]
    num = c[k - 1] + sum(b * di for b, di in zip(bits, d))
    if num % q:
        raise ArithmeticError("S^T y = c has no integer solution")
    y0 = num // q
    return [(y0 << i) - d[i] for i in range(k)]


@dataclass(frozen=True, eq=False)
class Gadget:
    n: int
    q: int
    k: int
    g: np.ndarray
    S: np.ndarray
    E_block: np.ndarray
    gs: np.ndarray = field(repr=False)
    gs_norms: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nk(self):
        return self.n * self.k

    @property
    def G(self):
        if "G" not in self._cache:
            self._cache["G"] = np.kron(np.eye(self.n, dtype=np.int64), self.g[None, :])
        return self._cache["G"]

    @property
    def E(self):
        if "E" not in self._cache:
            self._cache["E"] = np.kron(np.eye(self.n, dtype=np.int64), self.E_block)
        return self._cache["E"]

    @property
    def gs_norm(self):
        """Largest Gram-Schmidt norm of S."""
        return float(self.gs_norms.max())

    def _inv_s(self):
        if "Sinv" not in self._cache:
            # S^{-1} = E_block^T / q, entries bounded by 1 in magnitude
            self._cache["Sinv"] = self.E_block.T.astype(np.float64) / self.q
        return self._cache["Sinv"]


def make_gadget(n, q):
    if n < 1:
        raise ValueError("n must be positive")
    if q < 3 or not is_prime(q):
        raise InvalidModulus(f"gadget modulus must be an odd prime, got {q}")
    k = math.ceil(math.log2(q))
    bits = [(q >> i) & 1 for i in range(k)]
    g = np.array([1 << i for i in range(k)], dtype=np.int64)
    S = np.zeros((k, k), dtype=np.int64)
    for i in range(k - 1):
        S[i, i] = 2
        S[i + 1, i] = -1
    S[:, k - 1] = bits
    E_block = np.zeros((k, k), dtype=np.int64)
    for j in range(k):
        rhs = [0] * k
        rhs[j] = q
        E_block[:, j] = _solve_st(bits, q, rhs)
    gs = np.zeros((k, k))
    Sf = S.astype(np.float64)
    for i in range(k):
        v = Sf[:, i].copy()
        for j in range(i):
            v -= (Sf[:, i] @ gs[:, j]) / (gs[:, j] @ gs[:, j]) * gs[:, j]
        gs[:, i] = v
    gs_norms = np.sqrt((gs * gs).sum(axis=0))
    return Gadget(n=n, q=q, k=k, g=g, S=S, E_block=E_block, gs=gs, gs_norms=gs_norms)


def g_invert(gad, b):
    """Recover (s, e) from b = G^T s + e (mod q).

    ``e`` comes back exact whenever each block of e lies in the parallelepiped
    q S^{-T} [-1/2, 1/2)^k. Accepts a vector of length nk or an (nk, N) batch.
    """
    b = reduce(b, gad.q)
    single = b.ndim == 1
    cols = b.reshape(gad.nk, -1)
    N = cols.shape[1]
    blocks = cols.T.reshape(N * gad.n, gad.k)
    c = centered(blocks @ gad.S, gad.q)
    e = np.rint(c.astype(np.float64) @ gad._inv_s()).astype(np.int64)
    if np.any(e @ gad.S != c):
        raise GadgetInversionError("rounding produced an inconsistent error vector")
    s = np.mod(blocks[:, 0] - e[:, 0], gad.q)
    resid = np.mod(blocks - e - (s[:, None] * gad.g[None, :]) % gad.q, gad.q)
    if np.any(resid):
        raise GadgetInversionError("b - e is not in Lambda(G^T)")
    s = s.reshape(N, gad.n).T
    e = e.reshape(N, gad.nk).T
    if single:
        return s[:, 0], e[:, 0]
    return s, e


def sample_g_coset(gad, v, s, rng):
    """x ~ D_{Lambda_v^perp(G), s}, one column per syndrome column of ``v``.

    Randomised nearest plane over the basis S per block; the guarantee needs
    s >= ||S~|| * r (||S~|| = sqrt(5) for base 2).
    """
    v = reduce(v, gad.q)
    single = v.ndim == 1
    V = v.reshape(gad.n, -1)
    N = V.shape[1]
    flat = V.T.reshape(-1)
    sig = s / gad.gs_norms
    inv_nrm2 = 1.0 / (gad.gs_norms**2)
    x = _kernels.gadget_sample_batch(flat, gad.S, gad.gs, inv_nrm2, sig, rng.key())
    x = x.reshape(N, gad.nk).T
    return x[:, 0] if single else x


def _check_bits(gad, m):
    m = np.asarray(m, dtype=np.int64)
    if m.shape != (gad.nk,):
        raise CodecError(f"message must have length {gad.nk}, got {m.shape}")
    if np.any((m != 0) & (m != 1)):
        raise CodecError("message must be a bit vector")
    return m


def encode_msg(gad, m):
    """E m for m in {0,1}^{nk}."""
    m = _check_bits(gad, m)
    return (m.reshape(gad.n, gad.k) @ gad.E_block.T).reshape(-1)


def encode_msg_qary(gad, m):
    """The representative q*t of the coset E m + 2 Lambda(G^T) with t binary.

    Adding this instead of E m keeps b mod q free of the message.
    """
    m = _check_bits(gad, m).reshape(gad.n, gad.k)
    bits = [(gad.q >> i) & 1 for i in range(gad.k)]
    t = np.zeros_like(m)
    # S^T t = m (mod 2): rows i < k-1 reduce to t_{i+1}, last row to <bits, t>
    t[:, 1:] = m[:, :-1]
    t[:, 0] = (m[:, -1] + t[:, 1:] @ np.array(bits[1:], dtype=np.int64)) % 2
    return gad.q * t.reshape(-1)


def decode_msg(gad, w):
    """Invert the codec: y = E^{-1} w must be integral, and m = y mod 2.

    ``w`` is lifted to integers as given (canonical residues mod 2q, or any
    integer representative). Raises :class:`CodecError` when y is fractional.
    """
    w = np.asarray(w, dtype=np.int64)
    if w.shape != (gad.nk,):
        raise CodecError(f"expected length {gad.nk}, got {w.shape}")
    y = w.reshape(gad.n, gad.k) @ gad.S
    if np.any(y % gad.q):
        raise CodecError("vector is not in Lambda(G^T)")
    return ((y // gad.q) % 2).reshape(-1)
