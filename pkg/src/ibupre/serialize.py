"""Binary artifact format.

Layout: 8-byte magic ``IBUPRE01``, 1-byte kind, header (n, q, k, mbar) as
u64 little-endian, a kind-specific payload, and a trailing SHA-256 of every
preceding byte. Matrices are written as (rows, cols) u64 followed by the
entries in row-major order: canonical residues as u64, signed small-entry
matrices as two's-complement i64.
"""

import hashlib
import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from .modmath import NotInvertible, invert_mod, is_prime
from .scheme import (
    Ciphertext,
    MasterSecret,
    Params,
    PublicParams,
    ReKey,
    UserSecretKey,
    check_master,
    check_rekey,
    check_user_key,
)

MAGIC = b"IBUPRE01"
PP, MSK, SK, CT, RK, PARAMS = 1, 2, 3, 4, 5, 6
KIND_NAMES = {PP: "public-params", MSK: "master-secret", SK: "secret-key", CT: "ciphertext", RK: "rekey", PARAMS: "params"}
_HEADER = struct.Struct("<8sB4Q")
_DIGEST = 32


class FormatError(ValueError):
    pass


class BadMagic(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass


class InvariantViolation(FormatError):
    pass


class KindMismatch(FormatError):
    pass


@dataclass
class Artifact:
    kind: int
    n: int
    q: int
    k: int
    mbar: int
    obj: object


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def u64(self, v):
        self.buf.write(struct.pack("<Q", int(v)))

    def f64(self, v):
        self.buf.write(struct.pack("<d", float(v)))

    def mat(self, a, signed=False):
        a = np.atleast_2d(np.asarray(a, dtype=np.int64))
        self.u64(a.shape[0])
        self.u64(a.shape[1])
        self.buf.write(a.astype("<i8" if signed else "<u8").tobytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, size):
        if self.pos + size > len(self.data):
            raise FormatError("truncated payload")
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def mat(self, signed=False, modulus=None, shape=None):
        rows, cols = self.u64(), self.u64()
        if shape is not None and (rows, cols) != shape:
            raise InvariantViolation(f"matrix shape {(rows, cols)} != expected {shape}")
        if rows * cols > 1 << 26:
            raise FormatError("matrix too large")
        raw = np.frombuffer(self.take(8 * rows * cols), dtype="<i8" if signed else "<u8")
        if not signed and modulus is not None and raw.size and raw.max() >= modulus:
            raise InvariantViolation("residue out of range")
        return raw.astype(np.int64).reshape(rows, cols)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError("trailing bytes in payload")


def _params_fields(w, p):
    for v in (p.r, p.alpha_q, p.s_extract, p.s_rk1, p.s_rk2):
        w.f64(v)


def _read_params(rd, n, q, k, mbar):
    vals = [rd.f64() for _ in range(5)]
    if not all(math.isfinite(v) and v > 0 for v in vals):
        raise InvariantViolation("Gaussian parameters must be positive")
    return Params(n, q, k, mbar, *vals)


def serialize(kind, obj, params):
    """Encode ``obj`` (of the given kind) under the header of ``params``."""
    w = _Writer()
    if kind in (PP, PARAMS):
        _params_fields(w, params)
    if kind == PP:
        for a in (obj.abar, obj.abar_p, obj.a1, obj.a2, *obj.h):
            w.mat(a)
    elif kind == MSK:
        w.f64(obj.s)
        w.mat(obj.r, signed=True)
    elif kind == SK:
        w.f64(obj.s)
        w.mat(obj.ident)
        w.mat(obj.r1, signed=True)
        w.mat(obj.r2, signed=True)
    elif kind == CT:
        cts = list(obj)
        w.u64(len(cts))
        for ct in cts:
            w.u64(ct.level)
            w.mat(ct.target)
            w.mat(ct.b)
    elif kind == RK:
        w.mat(obj.src)
        w.mat(obj.dst)
        w.mat(obj.mat, signed=True)
    elif kind != PARAMS:
        raise KindMismatch(f"unknown kind {kind}")
    head = _HEADER.pack(MAGIC, kind, params.n, params.q, params.k, params.mbar)
    body = head + w.buf.getvalue()
    return body + hashlib.sha256(body).digest()


def _ident(rd, n, q):
    ident = rd.mat(modulus=q, shape=(1, n))[0]
    if not ident.any():
        raise InvariantViolation("zero identity")
    return ident


def deserialize(data, expect=None, pp=None):
    """Decode and re-validate an artifact.

    ``expect`` pins the kind; ``pp`` enables the relations that need public
    parameters (master identity, key identity, re-key algebra).
    """
    data = bytes(data)
    if len(data) < _HEADER.size + _DIGEST or data[:8] != MAGIC:
        raise BadMagic("not an artifact file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch("checksum does not match contents")
    _, kind, n, q, k, mbar = _HEADER.unpack_from(body)
    if expect is not None and kind != expect:
        raise KindMismatch(f"expected {KIND_NAMES.get(expect)}, found {KIND_NAMES.get(kind, kind)}")
    if kind not in KIND_NAMES:
        raise KindMismatch(f"unknown kind {kind}")
    if n < 1 or n > 1 << 16 or not 3 <= q <= 1 << 31 or k != math.ceil(math.log2(q)) or mbar < n * k:
        raise InvariantViolation("inconsistent header")
    if not is_prime(q):
        raise InvariantViolation(f"header modulus {q} is not prime")
    if pp is not None and (pp.params.n, pp.params.q, pp.params.mbar) != (n, q, mbar):
        raise InvariantViolation("artifact does not match the public parameters")
    nk = n * k
    rd = _Reader(body[_HEADER.size :])

    if kind in (PP, PARAMS):
        params = _read_params(rd, n, q, k, mbar)
        obj = params
        if kind == PP:
            abar = rd.mat(modulus=q, shape=(n, mbar))
            abar_p, a1, a2 = (rd.mat(modulus=q, shape=(n, nk)) for _ in range(3))
            h = tuple(rd.mat(modulus=q, shape=(n, n)) for _ in range(4))
            for t in h:
                try:
                    invert_mod(t, q)
                except NotInvertible:
                    raise InvariantViolation("tag matrix is singular") from None
            obj = PublicParams(params, abar, abar_p, a1, a2, h)
    elif kind == MSK:
        s = rd.f64()
        obj = MasterSecret(rd.mat(signed=True, shape=(mbar, nk)), s)
        if pp is not None and not check_master(pp, obj):
            raise InvariantViolation("master secret does not match public parameters")
    elif kind == SK:
        s = rd.f64()
        ident = _ident(rd, n, q)
        r1 = rd.mat(signed=True, shape=(mbar + nk, nk))
        r2 = rd.mat(signed=True, shape=(mbar + nk, nk))
        obj = UserSecretKey(ident, r1, r2, s)
        if pp is not None and not check_user_key(pp, obj):
            raise InvariantViolation("secret key does not satisfy its trapdoor identity")
    elif kind == CT:
        count = rd.u64()
        if count > 1 << 24:
            raise FormatError("too many ciphertext blocks")
        obj = []
        for _ in range(count):
            level = rd.u64()
            if level not in (0, 1):
                raise InvariantViolation("ciphertext level must be 0 or 1")
            target = _ident(rd, n, q)
            b = rd.mat(modulus=2 * q, shape=(1, mbar + 3 * nk))[0]
            obj.append(Ciphertext(b, int(level), target))
    else:  # RK
        src = _ident(rd, n, q)
        dst = _ident(rd, n, q)
        d = mbar + 3 * nk
        obj = ReKey(src, dst, rd.mat(signed=True, shape=(d, d)), mbar, nk, q)
        if not obj.structure_ok():
            raise InvariantViolation("re-encryption key has the wrong block structure")
        if pp is not None and not check_rekey(pp, obj):
            raise InvariantViolation("re-encryption key fails A_i rk = A_j")
    rd.done()
    return Artifact(kind, n, q, k, mbar, obj)
