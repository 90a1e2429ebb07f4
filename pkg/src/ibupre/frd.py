"""Full-rank-difference identity encoding.

An identity id in Z_q^n, read as a polynomial of degree < n, maps to the
matrix of multiplication by id(X) in the field Z_q[X]/(f). Since that ring is a
field, H_id is invertible for id != 0 and H_a - H_b = H_{a-b}.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .modmath import is_prime


class ZeroIdentity(ValueError):
    pass


# polynomials are coefficient lists, lowest degree first, entries in [0, q)


def _trim(a):
    while a and a[-1] == 0:
        a.pop()
    return a


def poly_mod(a, f, q):
    a = _trim([x % q for x in a])
    inv = pow(f[-1], -1, q)
    df = len(f) - 1
    while len(a) - 1 >= df:
        c = (a[-1] * inv) % q
        shift = len(a) - 1 - df
        for i, fi in enumerate(f):
            a[shift + i] = (a[shift + i] - c * fi) % q
        _trim(a)
    return a


def poly_mulmod(a, b, f, q):
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return poly_mod(out, f, q)


def poly_powmod(a, e, f, q):
    result = [1]
    base = poly_mod(a, f, q)
    while e:
        if e & 1:
            result = poly_mulmod(result, base, f, q)
        base = poly_mulmod(base, base, f, q)
        e >>= 1
    return result


def poly_gcd(a, b, q):
    a = _trim([x % q for x in a])
    b = _trim([x % q for x in b])
    while b:
        a, b = b, poly_mod(a, b, q)
    if a:
        inv = pow(a[-1], -1, q)
        a = [(x * inv) % q for x in a]
    return a


def poly_sub(a, b, q):
    out = [0] * max(len(a), len(b))
    for i, x in enumerate(a):
        out[i] += x
    for i, x in enumerate(b):
        out[i] -= x
    return _trim([x % q for x in out])


def is_irreducible(f, q):
    """Ben-Or test: gcd(X^{q^i} - X, f) = 1 for 1 <= i <= deg f / 2."""
    n = len(f) - 1
    x = [0, 1]
    h = x
    for _ in range(n // 2):
        h = poly_powmod(h, q, f, q)
        if poly_gcd(poly_sub(h, x, q), f, q) != [1]:
            return False
    return True


@dataclass(frozen=True)
class FrdContext:
    n: int
    q: int
    f: tuple  # monic, lowest degree first, length n + 1

    def __post_init__(self):
        if len(self.f) != self.n + 1 or self.f[-1] != 1:
            raise ValueError("f must be monic of degree n")
        if not is_irreducible(list(self.f), self.q):
            raise ValueError("f is reducible")


def _start_index(n, q, seed):
    if seed is None:
        return 0
    if isinstance(seed, str):
        seed = seed.encode()
    digest = hashlib.sha256(bytes(seed)).digest()
    return int.from_bytes(digest, "big") % (q**n)


def frd_init(n, q, seed=None):
    """Pick the first irreducible monic f of degree n from a seed-derived offset.

    Candidates are numbered t = sum a_i q^i over their low coefficients
    (a_0 least significant) and scanned cyclically from the offset.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not is_prime(q):
        raise ValueError(f"modulus {q} is not prime")
    total = q**n
    t = _start_index(n, q, seed)
    for _ in range(total):
        coeffs = [(t // q**i) % q for i in range(n)] + [1]
        if is_irreducible(coeffs, q):
            return FrdContext(n, q, tuple(coeffs))
        t = (t + 1) % total
    raise AssertionError("no irreducible polynomial found")  # unreachable over a field


def frd_encode(ctx, ident):
    """H_id: column j holds the coefficients of id(X) X^j mod f."""
    ident = [int(x) % ctx.q for x in np.asarray(ident).reshape(-1)]
    if len(ident) != ctx.n:
        raise ValueError(f"identity must have {ctx.n} coordinates")
    f = list(ctx.f)
    h = np.zeros((ctx.n, ctx.n), dtype=np.int64)
    col = ident
    for j in range(ctx.n):
        h[: len(col), j] = col
        col = poly_mod([0] + col, f, ctx.q)
        col = col + [0] * (ctx.n - len(col))
    return h


def check_identity(ident, q):
    ident = np.mod(np.asarray(ident, dtype=np.int64), q)
    if not ident.any():
        raise ZeroIdentity("identity must be nonzero")
    return ident
