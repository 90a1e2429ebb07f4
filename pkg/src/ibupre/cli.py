"""Command-line front end: ``ibupre <command> ...``.

Exit codes: 0 success, 1 usage error, 2 cryptographic failure (bottom),
3 I/O or file-format error.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import serialize as ser
from .frd import ZeroIdentity, frd_encode
from .gadget import decode_msg, encode_msg, encode_msg_qary, g_invert
from .sampler import Rng
from .scheme import (
    BudgetExceeded,
    DecryptionError,
    HopLimitExceeded,
    IdentityMismatch,
    SelfDelegation,
    decrypt,
    encrypt,
    extract,
    preset,
    reencrypt,
    rekeygen,
    setup,
)
from .trapdoor import ParameterTooSmall

EXIT_OK, EXIT_USAGE, EXIT_BOTTOM, EXIT_IO = 0, 1, 2, 3
_CRYPTO_ERRORS = (
    DecryptionError,
    ZeroIdentity,
    SelfDelegation,
    IdentityMismatch,
    HopLimitExceeded,
    ParameterTooSmall,
    BudgetExceeded,
)


class UsageError(Exception):
    pass


class PaddingError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# plumbing shared with the tests


def hash_identity(text, n, q):
    """Map a string to a nonzero vector in Z_q^n.

    SHA-256 in counter mode; each 8-byte chunk is masked to bit_length(q)
    bits and rejected when >= q. Not part of the scheme proper.
    """
    data = text.encode("utf-8")
    mask = (1 << q.bit_length()) - 1
    out = []
    counter = 0
    while True:
        block = hashlib.sha256(b"ibupre-id" + counter.to_bytes(4, "little") + data).digest()
        counter += 1
        for off in range(0, 32, 8):
            v = int.from_bytes(block[off : off + 8], "little") & mask
            if v < q:
                out.append(v)
                if len(out) == n:
                    vec = np.array(out, dtype=np.int64)
                    if vec.any():
                        return vec
                    out = []


def block_bytes(params):
    return params.nk // 8


def pack_message(data, params):
    """PKCS#7-pad ``data`` and split it into nk-bit message vectors."""
    size = block_bytes(params)
    pad = size - len(data) % size
    data = bytes(data) + bytes([pad]) * pad
    blocks = []
    for off in range(0, len(data), size):
        bits = np.unpackbits(np.frombuffer(data[off : off + size], dtype=np.uint8), bitorder="little")
        m = np.zeros(params.nk, dtype=np.int64)
        m[: bits.size] = bits
        blocks.append(m)
    return blocks


def unpack_message(blocks, params):
    size = block_bytes(params)
    raw = b"".join(
        np.packbits(np.asarray(m[: 8 * size], dtype=np.uint8), bitorder="little").tobytes() for m in blocks
    )
    if not raw:
        raise PaddingError("no message blocks")
    pad = raw[-1]
    if not 1 <= pad <= size or raw[-pad:] != bytes([pad]) * pad:
        raise PaddingError("invalid message padding")
    return raw[:-pad]


def write_atomic(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ibupre-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _rng(seed_hex):
    if seed_hex is None:
        return Rng()
    try:
        return Rng.from_hex(seed_hex)
    except ValueError as exc:
        raise UsageError(f"bad --seed: {exc}") from None


def _load_pp(path):
    return ser.deserialize(_read(path), ser.PP).obj


# ---------------------------------------------------------------------------
# commands


def cmd_setup(args):
    params = preset(args.preset)
    pp, msk = setup(params, _rng(args.seed))
    write_atomic(args.out_pp, ser.serialize(ser.PP, pp, params))
    write_atomic(args.out_msk, ser.serialize(ser.MSK, msk, params))


def cmd_extract(args):
    pp = _load_pp(args.pp)
    msk = ser.deserialize(_read(args.msk), ser.MSK, pp=pp).obj
    ident = hash_identity(args.id, pp.params.n, pp.params.q)
    sk = extract(pp, msk, ident, _rng(args.seed))
    write_atomic(args.out, ser.serialize(ser.SK, sk, pp.params))


def cmd_encrypt(args):
    pp = _load_pp(args.pp)
    ident = hash_identity(args.id, pp.params.n, pp.params.q)
    rng = _rng(args.seed)
    cts = [encrypt(pp, ident, m, rng) for m in pack_message(_read(args.infile), pp.params)]
    write_atomic(args.out, ser.serialize(ser.CT, cts, pp.params))


def cmd_decrypt(args):
    pp = _load_pp(args.pp)
    sk = ser.deserialize(_read(args.sk), ser.SK, pp=pp).obj
    cts = ser.deserialize(_read(args.infile), ser.CT, pp=pp).obj
    blocks = [decrypt(pp, sk, ct) for ct in cts]
    try:
        data = unpack_message(blocks, pp.params)
    except PaddingError as exc:
        raise DecryptionError("padding", str(exc)) from None
    write_atomic(args.out, data)


def cmd_rekeygen(args):
    pp = _load_pp(args.pp)
    sk = ser.deserialize(_read(args.sk), ser.SK, pp=pp).obj
    n, q = pp.params.n, pp.params.q
    rk = rekeygen(pp, sk, hash_identity(args.src, n, q), hash_identity(args.dst, n, q), _rng(args.seed))
    write_atomic(args.out, ser.serialize(ser.RK, rk, pp.params))


def cmd_reencrypt(args):
    art = ser.deserialize(_read(args.rk), ser.RK)
    ct_art = ser.deserialize(_read(args.infile), ser.CT)
    if (ct_art.n, ct_art.q, ct_art.mbar) != (art.n, art.q, art.mbar):
        raise ser.InvariantViolation("ciphertext and re-encryption key use different parameters")
    out = [reencrypt(art.obj, ct) for ct in ct_art.obj]
    write_atomic(args.out, ser.serialize(ser.CT, out, _HeaderParams(art)))


class _HeaderParams:
    """Header-only stand-in for Params when no public parameters are loaded."""

    def __init__(self, art):
        self.n, self.q, self.k, self.mbar = art.n, art.q, art.k, art.mbar


def cmd_info(args):
    art = ser.deserialize(_read(args.file))
    lines = [
        f"kind: {ser.KIND_NAMES[art.kind]}",
        f"n: {art.n}",
        f"q: {art.q}",
        f"k: {art.k}",
        f"mbar: {art.mbar}",
    ]
    obj = art.obj
    if art.kind in (ser.PP, ser.PARAMS):
        p = obj.params if art.kind == ser.PP else obj
        lines += [
            f"r: {p.r:.6f}",
            f"alpha_q: {p.alpha_q:g}",
            f"s_extract: {p.s_extract:g}",
            f"s_rk1: {p.s_rk1:g}",
            f"s_rk2: {p.s_rk2:g}",
        ]
        b = p.budget()
        lines.append(f"level0_ok: {b['level0_ok']}")
        lines.append(f"level1_ok: {b['level1_ok']}")
    elif art.kind == ser.CT:
        lines.append(f"blocks: {len(obj)}")
        lines.append(f"levels: {sorted({ct.level for ct in obj})}")
    elif art.kind == ser.RK:
        lines.append(f"dimension: {obj.mat.shape[0]}")
    print("\n".join(lines))


def _digest(data):
    return hashlib.sha256(data).hexdigest()


def vector_records(preset_name, seed_hex):
    """Deterministic test-vector records for the given preset and seed."""
    params = preset(preset_name)
    rng = Rng.from_hex(seed_hex)
    pp, msk = setup(params, rng)
    gad = pp.gad
    n, q = params.n, params.q
    recs = [
        {
            "op": "params",
            "preset": preset_name,
            "seed": seed_hex,
            "n": n,
            "q": q,
            "k": params.k,
            "mbar": params.mbar,
            "alpha_q": params.alpha_q,
            "s_extract": params.s_extract,
            "s_rk1": params.s_rk1,
            "s_rk2": params.s_rk2,
        },
        {"op": "frd", "f": list(pp.frd.f)},
        {"op": "setup", "pp_sha256": _digest(ser.serialize(ser.PP, pp, params))},
    ]
    for j in range(3):
        s = rng.uniform_mod(q, n)
        e = rng.uniform_mod(3, gad.nk) - 1
        b = (gad.G.T @ s + e) % q
        s_out, e_out = g_invert(gad, b)
        recs.append({"op": "g_invert", "b": b.tolist(), "s": s_out.tolist(), "e": e_out.tolist()})
        m = rng.bits(gad.nk)
        recs.append(
            {
                "op": "encode",
                "m": m.tolist(),
                "Em": encode_msg(gad, m).tolist(),
                "qt": encode_msg_qary(gad, m).tolist(),
                "decoded": decode_msg(gad, encode_msg(gad, m)).tolist(),
            }
        )
    ids = {}
    for name in ("alice", "bob"):
        ident = hash_identity(name, n, q)
        ids[name] = ident
        recs.append({"op": "identity", "text": name, "id": ident.tolist(), "H": frd_encode(pp.frd, ident).tolist()})
    sk = {name: extract(pp, msk, ident, rng) for name, ident in ids.items()}
    for name in ids:
        recs.append({"op": "extract", "id": name, "sk_sha256": _digest(ser.serialize(ser.SK, sk[name], params))})
    m = rng.bits(params.nk)
    ct = encrypt(pp, ids["alice"], m, rng)
    recs.append({"op": "encrypt", "id": "alice", "m": m.tolist(), "b": ct.b.tolist()})
    recs.append(_decrypt_record(pp, sk["alice"], ct, "alice"))
    rk = rekeygen(pp, sk["alice"], ids["alice"], ids["bob"], rng)
    recs.append({"op": "rekeygen", "from": "alice", "to": "bob", "rk_sha256": _digest(ser.serialize(ser.RK, rk, params))})
    ct2 = reencrypt(rk, ct)
    recs.append({"op": "reencrypt", "b": ct2.b.tolist()})
    recs.append(_decrypt_record(pp, sk["bob"], ct2, "bob"))
    return recs


def _decrypt_record(pp, sk, ct, who):
    rec = {"op": "decrypt", "id": who, "level": ct.level}
    try:
        rec["m"] = decrypt(pp, sk, ct).tolist()
        rec["result"] = "ok"
    except DecryptionError as exc:
        rec["result"] = "bottom"
        rec["check"] = exc.check
    return rec


def cmd_vectors(args):
    if args.seed is None:
        raise UsageError("vectors requires --seed")
    try:
        bytes.fromhex(args.seed)
    except ValueError:
        raise UsageError("--seed must be hex") from None
    text = "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in vector_records(args.preset, args.seed))
    if args.out:
        write_atomic(args.out, text.encode())
    else:
        sys.stdout.write(text)


def build_parser():
    p = _Parser(prog="ibupre", description="Identity-based unidirectional proxy re-encryption")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("setup", help="generate public parameters and master secret")
    c.add_argument("--preset", choices=("toy", "demo"), default="demo")
    c.add_argument("--seed")
    c.add_argument("--out-pp", required=True)
    c.add_argument("--out-msk", required=True)
    c.set_defaults(func=cmd_setup)

    c = sub.add_parser("extract", help="derive a user secret key")
    c.add_argument("--pp", required=True)
    c.add_argument("--msk", required=True)
    c.add_argument("--id", required=True)
    c.add_argument("--seed")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_extract)

    c = sub.add_parser("encrypt", help="encrypt a file to an identity")
    c.add_argument("--pp", required=True)
    c.add_argument("--id", required=True)
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--seed")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_encrypt)

    c = sub.add_parser("decrypt", help="decrypt a ciphertext file")
    c.add_argument("--pp", required=True)
    c.add_argument("--sk", required=True)
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_decrypt)

    c = sub.add_parser("rekeygen", help="build a re-encryption key")
    c.add_argument("--pp", required=True)
    c.add_argument("--sk", required=True)
    c.add_argument("--from", dest="src", required=True)
    c.add_argument("--to", dest="dst", required=True)
    c.add_argument("--seed")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_rekeygen)

    c = sub.add_parser("reencrypt", help="re-encrypt a ciphertext file")
    c.add_argument("--rk", required=True)
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_reencrypt)

    c = sub.add_parser("vectors", help="emit deterministic JSON-lines test vectors")
    c.add_argument("--preset", choices=("toy", "demo"), default="toy")
    c.add_argument("--seed")
    c.add_argument("--out")
    c.set_defaults(func=cmd_vectors)

    c = sub.add_parser("info", help="print an artifact header")
    c.add_argument("file")
    c.set_defaults(func=cmd_info)
    return p


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"ibupre: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DecryptionError as exc:
        print(f"ibupre: decryption failed ({exc.check}): {exc}", file=sys.stderr)
        return EXIT_BOTTOM
    except _CRYPTO_ERRORS as exc:
        print(f"ibupre: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BOTTOM
    except (OSError, ser.FormatError) as exc:
        print(f"ibupre: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
