"""Gadget trapdoors: generation, LWE inversion, preimage sampling, delegation.

A tagged matrix is A = [A0 | A1 | ... | Ak] where A0 is n x w and every later
block is n x nk. A trapdoor is a list of integer matrices R_1..R_k (each
w x nk) with A0 R_j + A_j = H_j G for every j.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .gadget import GadgetInversionError, g_invert, sample_g_coset
from .modmath import centered, int_matmul, invert_mod, mat_mul_mod, reduce
from .sampler import GaussParam, sample_z_matrix, sample_z_vec, smoothing_r

POWER_ITERS = 30
SLACK = 1.2


class ParameterTooSmall(ValueError):
    pass


class InversionFailure(ArithmeticError):
    pass


@dataclass(eq=False)
class TaggedMatrix:
    blocks: list
    tags: list
    gad: object
    _inv: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.blocks) != len(self.tags) + 1:
            raise ValueError("need exactly one tag per non-leading block")
        for b in self.blocks[1:]:
            if b.shape != (self.gad.n, self.gad.nk):
                raise ValueError(f"tagged block has shape {b.shape}")

    @property
    def q(self):
        return self.gad.q

    @property
    def width(self):
        return sum(b.shape[1] for b in self.blocks)

    @property
    def lead_width(self):
        return self.blocks[0].shape[1]

    def matrix(self):
        return np.concatenate(self.blocks, axis=1)

    def tag_inverse(self, i):
        if i not in self._inv:
            self._inv[i] = invert_mod(self.tags[i], self.q)
        return self._inv[i]


@dataclass(eq=False)
class Trapdoor:
    r_blocks: list
    s: float
    _cache: dict = field(default_factory=dict, repr=False)

    def stacked(self, i):
        """[R_i; I] as an integer matrix."""
        r = self.r_blocks[i]
        return np.concatenate([r, np.eye(r.shape[1], dtype=np.int64)], axis=0)

    def s1(self, i):
        key = ("s1", i)
        if key not in self._cache:
            self._cache[key] = largest_singular_value(self.r_blocks[i])
        return self._cache[key]


def largest_singular_value(r, iters=POWER_ITERS):
    """Power-iteration estimate of s_1(r) from a fixed pseudo-random start.

    A structured start such as the all-ones vector can lie in the kernel of
    r (e.g. r = [[1, -1], [-1, 1]]) and would report 0.
    """
    rf = np.asarray(r, dtype=np.float64)
    v = np.random.default_rng(0).standard_normal(rf.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = rf.T @ (rf @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        est = math.sqrt(nrm)
    return est


def gadget_param(n):
    """Parameter used for the gadget coset sampler inside sample_pre."""
    return math.sqrt(6.0) * smoothing_r(n)


def s_min(trap, n, i=0):
    """Smallest sample_pre parameter accepted for tag i: 1.2 sqrt(s1^2 + 1) s_G."""
    sg = gadget_param(n)
    return SLACK * math.sqrt(trap.s1(i) ** 2 + 1.0) * sg


def trap_gen(abar, h, gad, rng, s=None):
    """Build A = [abar | -abar R + h G] with R ~ D_{Z,s} (s defaults to r)."""
    s = smoothing_r(gad.n) if s is None else s
    abar = reduce(abar, gad.q)
    r = sample_z_matrix(abar.shape[1], gad.nk, GaussParam(s), rng)
    hg = mat_mul_mod(h, gad.G, gad.q)
    a1 = (hg - mat_mul_mod(abar, r, gad.q)) % gad.q
    return TaggedMatrix([abar, a1], [reduce(h, gad.q)], gad), Trapdoor([r], s)


def check_trapdoor(a, trap):
    """Whether A0 R_j + A_j = H_j G (mod q) holds for every block."""
    q = a.q
    if len(trap.r_blocks) != len(a.tags):
        return False
    for j, r in enumerate(trap.r_blocks):
        lhs = (mat_mul_mod(a.blocks[0], r, q) + a.blocks[j + 1]) % q
        if not np.array_equal(lhs, mat_mul_mod(a.tags[j], a.gad.G, q)):
            return False
    return True


def invert_lwe(a, trap, b, i=0):
    """Recover (s, e) from b = A^t s + e (mod q) using the trapdoor for tag i.

    Compresses b by [R_i; I], inverts the gadget, and recomputes e exactly as
    centered(b - A^t s). Raises :class:`InversionFailure` when the gadget step
    fails.
    """
    q = a.q
    b = reduce(b, q)
    if b.shape != (a.width,):
        raise ValueError(f"b must have length {a.width}")
    w0 = a.lead_width
    off = w0 + i * a.gad.nk
    bp = (mat_mul_mod(b[:w0][None, :], trap.r_blocks[i], q)[0] + b[off : off + a.gad.nk]) % q
    try:
        sp, _ = g_invert(a.gad, bp)
    except GadgetInversionError as exc:
        raise InversionFailure(str(exc)) from exc
    s = mat_mul_mod(a.tag_inverse(i).T, sp, q)
    e = centered(b - mat_mul_mod(a.matrix().T, s, q), q)
    return s, e


def _perturbation_factor(a, trap, i, s):
    """Cholesky factor of s^2 I - s_G^2 T T^t - r^2 I, cached per (i, s)."""
    key = ("chol", i, float(s))
    if key not in trap._cache:
        n = a.gad.n
        smin = s_min(trap, n, i)
        if s < smin:
            raise ParameterTooSmall(f"s = {s:.4g} below s_min = {smin:.4g}")
        sg = gadget_param(n)
        r = smoothing_r(n)
        t = trap.stacked(i).astype(np.float64)
        cov = -(sg**2) * (t @ t.T)
        cov[np.diag_indices_from(cov)] += s * s - r * r
        try:
            trap._cache[key] = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ParameterTooSmall("perturbation covariance is not positive definite") from exc
    return trap._cache[key]


def sample_pre(a, trap, i, u, s, rng):
    """x with A x = u (mod q), x close to D_{Lambda_u^perp(A), s}.

    ``u`` may be a length-n vector or an n x N matrix of syndromes (one
    preimage column per syndrome column). Blocks other than the leading one
    and block i are filled with D_{Z,s} samples.
    """
    gad = a.gad
    q = a.q
    n, nk = gad.n, gad.nk
    u = reduce(u, q)
    single = u.ndim == 1
    U = u.reshape(n, -1)
    N = U.shape[1]
    L = _perturbation_factor(a, trap, i, s)
    w0 = a.lead_width

    out = np.zeros((a.width, N), dtype=np.int64)
    target = U.copy()
    for j in range(len(a.tags)):
        if j == i:
            continue
        off = w0 + j * nk
        xj = sample_z_matrix(nk, N, GaussParam(s), rng)
        out[off : off + nk] = xj
        target = (target - mat_mul_mod(a.blocks[j + 1], xj, q)) % q

    r = smoothing_r(n)
    y = L @ rng.normal((L.shape[0], N)) / math.sqrt(2 * math.pi)
    p = sample_z_vec(y, r, rng)
    a2 = np.concatenate([a.blocks[0], a.blocks[i + 1]], axis=1)
    v = mat_mul_mod(a.tag_inverse(i), (target - mat_mul_mod(a2, p, q)) % q, q)
    z = sample_g_coset(gad, v, gadget_param(n), rng)
    x = p + np.concatenate([int_matmul(trap.r_blocks[i], z), z], axis=0)
    out[:w0] = x[:w0]
    off = w0 + i * nk
    out[off : off + nk] = x[w0:]
    return out[:, 0] if single else out


def del_trap(a, trap, a1, h_new, s, rng, i=0):
    """Delegate: R' with A R' = H' G - A1, so [A | A1] has trapdoor R' for H'.

    ``a`` must be a tagged matrix with trapdoor ``trap`` for its tag i. Returns
    the extended tagged matrix and the new trapdoor.
    """
    q = a.q
    h_new = reduce(h_new, q)
    target = (mat_mul_mod(h_new, a.gad.G, q) - reduce(a1, q)) % q
    r_new = sample_pre(a, trap, i, target, s, rng)
    ext = TaggedMatrix([a.matrix(), reduce(a1, q)], [h_new], a.gad)
    return ext, Trapdoor([r_new], s)
