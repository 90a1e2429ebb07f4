"""Single-hop identity-based unidirectional proxy re-encryption.

Ciphertexts live in Z_{2q}^{mbar + 3nk}. A fresh ciphertext for identity i is

    b = 2 (s^t A_i mod q) + e + (0, 0, q t)  (mod 2q)

with A_i = [Abar | Abar' + H_i G | A_i1 | A_i2]. The user key is a pair of
trapdoors (R_i1, R_i2) with A_i [R_i1 R_i2; I 0; 0 I] = [H1 G | H2 G].
A re-encryption key rk satisfies A_i rk = A_j and acts by b' = b^t rk.
"""

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .frd import ZeroIdentity, check_identity, frd_encode, frd_init
from .gadget import CodecError, InvalidModulus, decode_msg, encode_msg_qary, make_gadget
from .modmath import NoSolution, NotInvertible, invert_mod, is_prime, mat_mul_mod, reduce, solve_mod_prime
from .sampler import GaussParam, Rng, sample_z_matrix, sample_z_vec, smoothing_r
from .trapdoor import (
    InversionFailure,
    TaggedMatrix,
    Trapdoor,
    del_trap,
    invert_lwe,
    s_min,
    sample_pre,
)

FRD_SEED = b"ibupre-frd"
TAIL_FACTOR = 7.0


class BudgetExceeded(ValueError):
    pass


class SelfDelegation(ValueError):
    pass


class HopLimitExceeded(ValueError):
    pass


class IdentityMismatch(ValueError):
    pass


class DecryptionError(Exception):
    """Decryption output bottom; ``check`` names the failed step."""

    def __init__(self, check, detail=""):
        super().__init__(f"{check}: {detail}" if detail else check)
        self.check = check


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Params:
    n: int
    q: int
    k: int
    mbar: int
    r: float
    alpha_q: float
    s_extract: float
    s_rk1: float
    s_rk2: float

    @property
    def nk(self):
        return self.n * self.k

    @property
    def m(self):
        return self.mbar + self.nk

    @property
    def ct_len(self):
        return self.mbar + 3 * self.nk

    def thresholds(self, level):
        """Norm bounds (e0bar, e0', e1, e2) used by decrypt at the given level."""
        t_bar = self.alpha_q * math.sqrt(self.mbar)
        t = self.alpha_q * math.sqrt(2 * self.mbar * self.nk) * self.r
        if level == 1:
            scale = self.s_rk2 * math.sqrt(self.mbar + 2 * self.nk) * self.r
            t_bar, t = t_bar * scale, t * scale
        return t_bar, t, t, t

    def budget(self):
        return noise_budget(self)


def _param_rng(tag, n, q, mbar):
    digest = hashlib.sha256(f"ibupre-{tag}:{n}:{q}:{mbar}".encode()).digest()
    return Rng(digest)


def _reference_s_min(rows, cols, s, n, rng):
    r = sample_z_matrix(rows, cols, GaussParam(s), rng)
    return s_min(Trapdoor([r], s), n)


def noise_budget(p):
    """Gaussian estimate of the compressed error seen by the gadget inverter.

    Decryption recovers e exactly when S^T e stays inside [-q/2, q/2) per
    block; rows of S^T amplify the per-entry deviation by at most
    max(sqrt 5, sqrt popcount(q)). The bound is that deviation times 7 and is
    compared with q/4.
    """
    two_pi = 2 * math.pi
    v_bar = p.alpha_q**2 / two_pi
    s_prime = math.sqrt(p.mbar * v_bar + p.mbar * p.alpha_q**2) * p.r
    v_e = s_prime**2 / two_pi
    v_r = p.s_extract**2 / two_pi
    v_x1 = p.s_rk1**2 / two_pi
    v_x2 = p.s_rk2**2 / two_pi
    amp = max(math.sqrt(5.0), math.sqrt(bin(p.q).count("1")))

    var0 = (p.mbar * v_bar + p.nk * v_e) * v_r + v_e
    v_t0 = (p.mbar * v_bar + 2 * p.nk * v_e) * v_x1
    v_t2 = (p.mbar * v_bar + 2 * p.nk * v_e) * v_x2 + v_e
    var1 = (p.mbar * v_bar + p.nk * v_t0) * v_r + v_t2
    limit = p.q / 4
    b0 = TAIL_FACTOR * amp * math.sqrt(var0)
    b1 = TAIL_FACTOR * amp * math.sqrt(var1)
    return {
        "sigma0": math.sqrt(var0),
        "bound0": b0,
        "sigma1": math.sqrt(var1),
        "bound1": b1,
        "limit": limit,
        "level0_ok": b0 < limit,
        "level1_ok": b1 < limit,
    }


def params_new(n, q, mbar=None, *, enforce_budget=True):
    """Derive every scheme parameter from (n, q, mbar).

    Gaussian widths are calibrated against freshly sampled reference
    trapdoors drawn from a stream fixed by (n, q, mbar), so the result is
    deterministic. Raises :class:`BudgetExceeded` when even fresh ciphertexts
    cannot be decrypted (unless ``enforce_budget`` is false).
    """
    if not is_prime(q):
        raise InvalidModulus(f"{q} is not prime")
    if not (1 << 8) <= q <= (1 << 31):
        raise InvalidModulus(f"q = {q} outside [2^8, 2^31]")
    if n < 1:
        raise ValueError("n must be positive")
    k = math.ceil(math.log2(q))
    nk = n * k
    mbar = nk if mbar is None else int(mbar)
    if mbar < nk:
        raise ValueError(f"mbar = {mbar} must be at least nk = {nk}")
    r = smoothing_r(n)
    alpha_q = float(max(2, round(q * (nk**-3) * (r**-3))))
    rng = _param_rng("params", n, q, mbar)
    s_extract = round(1.2 * _reference_s_min(mbar, nk, r, n, rng), 2)
    s_rk1 = round(1.2 * _reference_s_min(mbar + nk, nk, s_extract, n, rng), 2)
    s_rk2 = round(s_rk1 * math.sqrt(mbar), 2)
    p = Params(n, q, k, mbar, r, alpha_q, s_extract, s_rk1, s_rk2)
    if enforce_budget and not noise_budget(p)["level0_ok"]:
        raise BudgetExceeded(f"level-0 noise bound exceeds q/4 for n={n}, q={q}")
    return p


PRESETS = {"toy": (4, 65537), "demo": (8, 1073741827)}


@lru_cache(maxsize=None)
def preset(name):
    """Named parameter set; built without budget enforcement (see ``budget()``)."""
    try:
        n, q = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}") from None
    return params_new(n, q, enforce_budget=False)


# ---------------------------------------------------------------------------
# keys and ciphertexts


@dataclass(eq=False)
class PublicParams:
    params: Params
    abar: np.ndarray
    abar_p: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    h: tuple  # (H1, H2, H3, H4)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def gad(self):
        if "gad" not in self._cache:
            self._cache["gad"] = make_gadget(self.params.n, self.params.q)
        return self._cache["gad"]

    @property
    def frd(self):
        if "frd" not in self._cache:
            self._cache["frd"] = frd_init(self.params.n, self.params.q, FRD_SEED)
        return self._cache["frd"]


@dataclass(eq=False)
class MasterSecret:
    r: np.ndarray
    s: float
    _trap: list = field(default_factory=list, repr=False)

    @property
    def trapdoor(self):
        if not self._trap:
            self._trap.append(Trapdoor([self.r], self.s))
        return self._trap[0]


@dataclass(eq=False)
class UserSecretKey:
    ident: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    s: float
    _trap: list = field(default_factory=list, repr=False)

    @property
    def trapdoor(self):
        if not self._trap:
            self._trap.append(Trapdoor([self.r1, self.r2], self.s))
        return self._trap[0]


@dataclass(eq=False)
class Ciphertext:
    b: np.ndarray
    level: int
    target: np.ndarray


@dataclass(eq=False)
class ReKey:
    src: np.ndarray
    dst: np.ndarray
    mat: np.ndarray
    mbar: int
    nk: int
    q: int

    def block(self, a, c):
        """X_{ac} for a in {0, 1, 2}, c in {0, 1, 2}."""
        rows = [slice(0, self.mbar)] + [
            slice(self.mbar + j * self.nk, self.mbar + (j + 1) * self.nk) for j in range(3)
        ]
        cols = rows[1:]
        return self.mat[rows[a], cols[c]]

    def structure_ok(self):
        mb, nk = self.mbar, self.nk
        d = mb + 3 * nk
        if self.mat.shape != (d, d):
            return False
        return (
            np.array_equal(self.mat[:mb, :mb], np.eye(mb, dtype=np.int64))
            and not self.mat[mb:, :mb].any()
            and not self.mat[mb + 2 * nk :, mb : mb + 2 * nk].any()
            and np.array_equal(self.mat[mb + 2 * nk :, mb + 2 * nk :], np.eye(nk, dtype=np.int64))
        )


# ---------------------------------------------------------------------------
# identity-dependent matrices


@dataclass(eq=False)
class IdentityMatrices:
    h_id: np.ndarray
    a_tilde: TaggedMatrix  # [Abar | Abar' + H_id G], tag H_id, trapdoor msk
    a_i1: np.ndarray
    a_i2: np.ndarray

    def full(self):
        return np.concatenate([self.a_tilde.matrix(), self.a_i1, self.a_i2], axis=1)

    def key_matrix(self, pp):
        """[A~ | A_i1 | A_i2] with tags (H1, H2): the user key's trapdoor shape."""
        return TaggedMatrix([self.a_tilde.matrix(), self.a_i1, self.a_i2], [pp.h[0], pp.h[1]], pp.gad)

    def rekey_matrix(self, pp):
        """[A~ | A_i1] with tag H1, sampled by rekeygen."""
        return TaggedMatrix([self.a_tilde.matrix(), self.a_i1], [pp.h[0]], pp.gad)


def identity_matrices(pp, ident):
    ident = check_identity(ident, pp.params.q)
    q = pp.params.q
    gad = pp.gad
    h_id = frd_encode(pp.frd, ident)
    hg = mat_mul_mod(h_id, gad.G, q)
    a_tilde = TaggedMatrix([pp.abar, (pp.abar_p + hg) % q], [h_id], gad)
    a_i1 = (pp.a1 + mat_mul_mod(pp.h[2], hg, q)) % q
    a_i2 = (pp.a2 + mat_mul_mod(pp.h[3], hg, q)) % q
    return IdentityMatrices(h_id, a_tilde, a_i1, a_i2)


def _same_id(a, b):
    return np.array_equal(np.asarray(a), np.asarray(b))


# ---------------------------------------------------------------------------
# algorithms


def _random_invertible(n, q, rng):
    while True:
        h = rng.uniform_mod(q, (n, n))
        try:
            invert_mod(h, q)
        except NotInvertible:
            continue
        return h


def setup(params, rng):
    n, q, mbar, nk = params.n, params.q, params.mbar, params.nk
    abar = rng.uniform_mod(q, (n, mbar))
    r = sample_z_matrix(mbar, nk, GaussParam(params.r), rng)
    abar_p = (-mat_mul_mod(abar, r, q)) % q
    a1 = rng.uniform_mod(q, (n, nk))
    a2 = rng.uniform_mod(q, (n, nk))
    h = tuple(_random_invertible(n, q, rng) for _ in range(4))
    pp = PublicParams(params, abar, abar_p, a1, a2, h)
    return pp, MasterSecret(r, params.r)


def check_master(pp, msk):
    q = pp.params.q
    return not ((mat_mul_mod(pp.abar, msk.r, q) + pp.abar_p) % q).any()


def extract(pp, msk, ident, rng):
    """User key (R_i1, R_i2) by two trapdoor delegations from msk."""
    mats = identity_matrices(pp, ident)
    s = pp.params.s_extract
    _, t1 = del_trap(mats.a_tilde, msk.trapdoor, mats.a_i1, pp.h[0], s, rng)
    _, t2 = del_trap(mats.a_tilde, msk.trapdoor, mats.a_i2, pp.h[1], s, rng)
    ident = check_identity(ident, pp.params.q)
    return UserSecretKey(ident, t1.r_blocks[0], t2.r_blocks[0], s)


def check_user_key(pp, sk):
    """A_i [R1 R2; I 0; 0 I] = [H1 G | H2 G] (mod q)."""
    q = pp.params.q
    mats = identity_matrices(pp, sk.ident)
    at = mats.a_tilde.matrix()
    lhs1 = (mat_mul_mod(at, sk.r1, q) + mats.a_i1) % q
    lhs2 = (mat_mul_mod(at, sk.r2, q) + mats.a_i2) % q
    G = pp.gad.G
    return np.array_equal(lhs1, mat_mul_mod(pp.h[0], G, q)) and np.array_equal(
        lhs2, mat_mul_mod(pp.h[1], G, q)
    )


def sample_noise(params, rng):
    """Error vector e = (e0bar, e0', e1, e2) for a fresh ciphertext."""
    e_bar = sample_z_vec(np.zeros(params.mbar), params.alpha_q, rng)
    s_prime = math.sqrt(float(e_bar @ e_bar) + params.mbar * params.alpha_q**2) * params.r
    rest = sample_z_vec(np.zeros(3 * params.nk), s_prime, rng)
    return np.concatenate([e_bar, rest])


def encrypt_with(pp, ident, m, s, e):
    """Deterministic core of encrypt for given secret s and error e."""
    p = pp.params
    q = p.q
    mats = identity_matrices(pp, ident)
    a = mats.full()
    msg = encode_msg_qary(pp.gad, m)
    e = np.asarray(e, dtype=np.int64)
    if e.shape != (p.ct_len,):
        raise ValueError(f"error vector must have length {p.ct_len}")
    b = 2 * mat_mul_mod(a.T, reduce(s, q), q) + e
    b[p.mbar + 2 * p.nk :] += msg
    return Ciphertext(np.mod(b, 2 * q), 0, check_identity(ident, q))


def encrypt(pp, ident, m, rng):
    check_identity(ident, pp.params.q)
    s = rng.uniform_mod(pp.params.q, pp.params.n)
    e = sample_noise(pp.params, rng)
    return encrypt_with(pp, ident, m, s, e)


def decrypt(pp, sk, ct):
    """Recover m or raise :class:`DecryptionError` naming the failed check."""
    p = pp.params
    q = p.q
    mb, nk = p.mbar, p.nk
    b = np.asarray(ct.b)
    if b.shape != (p.ct_len,) or ct.level not in (0, 1) or np.any((b < 0) | (b >= 2 * q)):
        raise DecryptionError("form", "malformed ciphertext")
    if not np.asarray(sk.ident).any() or not np.asarray(ct.target).any():
        raise DecryptionError("identity", "zero identity")
    if not _same_id(sk.ident, ct.target):
        raise DecryptionError("identity", "ciphertext is for a different identity")
    mats = identity_matrices(pp, sk.ident)
    a = mats.key_matrix(pp)
    try:
        _, e = invert_lwe(a, sk.trapdoor, b % q, i=1)
    except InversionFailure as exc:
        raise DecryptionError("invert", str(exc)) from exc

    parts = (e[:mb], e[mb : mb + nk], e[mb + nk : mb + 2 * nk], e[mb + 2 * nk :])
    for name, part, bound in zip(("e0bar", "e0'", "e1", "e2"), parts, p.thresholds(ct.level)):
        if np.linalg.norm(part.astype(np.float64)) >= bound:
            raise DecryptionError("norm", f"|{name}| exceeds {bound:.4g}")

    v = np.mod(b - e, 2 * q)
    v0bar = v[:mb]
    if np.any(v0bar % 2):
        raise DecryptionError("lattice", "V0bar is not even")
    try:
        solve_mod_prime(pp.abar.T, v0bar // 2, q)
    except NoSolution:
        raise DecryptionError("lattice", "V0bar/2 not in Lambda(Abar^t)") from None

    v0 = v[: mb + nk]
    w1 = (mat_mul_mod(v0[None, :], sk.r1, 2 * q)[0] + v[mb + nk : mb + 2 * nk]) % (2 * q)
    w2 = (mat_mul_mod(v0[None, :], sk.r2, 2 * q)[0] + v[mb + 2 * nk :]) % (2 * q)
    try:
        if decode_msg(pp.gad, w1).any():
            raise DecryptionError("integrity", "H1 block does not decode to zero")
        return decode_msg(pp.gad, w2)
    except CodecError as exc:
        raise DecryptionError("codec", str(exc)) from exc


def rekeygen(pp, sk_i, id_i, id_j, rng):
    """Re-encryption key rk_{i->j} with A_i rk = A_j."""
    q = pp.params.q
    id_i = check_identity(id_i, q)
    id_j = check_identity(id_j, q)
    if _same_id(id_i, id_j):
        raise SelfDelegation("delegator and delegatee identities coincide")
    if not _same_id(sk_i.ident, id_i):
        raise IdentityMismatch("secret key does not belong to the delegator")
    p = pp.params
    mi = identity_matrices(pp, id_i)
    mj = identity_matrices(pp, id_j)
    a = mi.rekey_matrix(pp)
    trap = sk_i.trapdoor
    G = pp.gad.G
    at = mi.a_tilde.matrix()

    t0 = mj.a_tilde.blocks[1]
    t1 = mj.a_i1
    t2 = (mj.a_i2 + mat_mul_mod(at, sk_i.r2, q) - mat_mul_mod(pp.h[1], G, q)) % q
    x0 = sample_pre(a, trap, 0, t0, p.s_rk1, rng)
    x1 = sample_pre(a, trap, 0, t1, p.s_rk2, rng)
    x2 = sample_pre(a, trap, 0, t2, p.s_rk2, rng)

    mb, nk = p.mbar, p.nk
    d = p.ct_len
    mat = np.zeros((d, d), dtype=np.int64)
    mat[:mb, :mb] = np.eye(mb, dtype=np.int64)
    mat[: mb + 2 * nk, mb : mb + nk] = x0
    mat[: mb + 2 * nk, mb + nk : mb + 2 * nk] = x1
    mat[: mb + 2 * nk, mb + 2 * nk :] = x2
    mat[mb + 2 * nk :, mb + 2 * nk :] = np.eye(nk, dtype=np.int64)
    rk = ReKey(id_i, id_j, mat, mb, nk, q)
    if not check_rekey(pp, rk):
        raise ArithmeticError("re-encryption key failed A_i rk = A_j")
    return rk


def check_rekey(pp, rk):
    q = pp.params.q
    if not rk.structure_ok():
        return False
    ai = identity_matrices(pp, rk.src).full()
    aj = identity_matrices(pp, rk.dst).full()
    return np.array_equal(mat_mul_mod(ai, rk.mat, q), aj)


def reencrypt(rk, ct):
    """b' = b^t rk (mod 2q); single hop only."""
    if ct.level != 0:
        raise HopLimitExceeded("ciphertext was already re-encrypted")
    if not _same_id(ct.target, rk.src):
        raise IdentityMismatch("ciphertext is not addressed to the delegator")
    two_q = 2 * rk.q
    b = mat_mul_mod(np.asarray(ct.b, dtype=np.int64)[None, :], rk.mat, two_q)[0]
    return Ciphertext(b, 1, np.array(rk.dst, copy=True))
