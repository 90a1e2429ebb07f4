import math

import numpy as np
import pytest
from scipy.stats import chisquare

import ibupre.scheme as scheme
from ibupre.gadget import InvalidModulus
from ibupre.modmath import invert_mod, mat_mul_mod
from ibupre.sampler import Rng, smoothing_r
from ibupre.scheme import (
    BudgetExceeded,
    Ciphertext,
    DecryptionError,
    HopLimitExceeded,
    IdentityMismatch,
    Params,
    ReKey,
    SelfDelegation,
    check_master,
    check_rekey,
    check_user_key,
    decrypt,
    encrypt,
    encrypt_with,
    extract,
    identity_matrices,
    noise_budget,
    params_new,
    preset,
    reencrypt,
    rekeygen,
    sample_noise,
    setup,
)
from ibupre.frd import ZeroIdentity


def test_demo_params():
    p = preset("demo")
    assert (p.n, p.q, p.k, p.mbar) == (8, 1073741827, 31, 248)
    assert p.alpha_q == 3
    assert p.r == pytest.approx(smoothing_r(8))
    assert p.s_rk2 == pytest.approx(p.s_rk1 * math.sqrt(p.mbar), abs=0.01)
    assert noise_budget(p)["level0_ok"]
    assert params_new(8, 1073741827) == p  # deterministic calibration


def test_toy_params():
    p = preset("toy")
    assert (p.n, p.q, p.k, p.mbar) == (4, 65537, 17, 68)
    assert p.alpha_q == 2
    with pytest.raises(BudgetExceeded):
        params_new(4, 65537)


def test_params_rejections():
    with pytest.raises(ValueError):
        params_new(8, 1073741827, mbar=100)
    with pytest.raises(InvalidModulus):
        params_new(4, 65536)
    with pytest.raises(InvalidModulus):
        params_new(2, 251)  # prime, but below 2^8
    with pytest.raises(ValueError):
        preset("huge")


def test_level0_thresholds_below_quarter_q():
    p = preset("demo")
    assert all(t < p.q / 4 for t in p.thresholds(0))


def test_setup_identities(demo):
    pp, msk = demo
    q = pp.params.q
    assert check_master(pp, msk)
    assert not ((mat_mul_mod(pp.abar, msk.r, q) + pp.abar_p) % q).any()
    for h in pp.h:
        invert_mod(h, q)


def test_setup_regularity_small_modulus():
    # entries of Abar' = -Abar R look uniform mod 13
    p = Params(2, 13, 4, 8, smoothing_r(2), 2.0, 10.0, 10.0, 10.0)
    rng = Rng(0x5E7)
    counts = np.zeros((2, 8, 13))
    for _ in range(10_000):
        pp, msk = setup(p, rng)
        np.add.at(counts, (np.arange(2)[:, None], np.arange(8)[None, :], pp.abar_p), 1)
    pvals = [chisquare(counts[i, j]).pvalue for i in range(2) for j in range(8)]
    assert min(pvals) > 0.001 / 16


def test_extract_identity(demo, demo_keys):
    pp, msk = demo
    ida, idb, ska, skb = demo_keys
    q = pp.params.q
    for sk in (ska, skb):
        assert check_user_key(pp, sk)
        mats = identity_matrices(pp, sk.ident)
        nk = pp.params.nk
        block = np.zeros((pp.params.m + 2 * nk, 2 * nk), dtype=np.int64)
        block[: pp.params.m, :nk] = sk.r1
        block[: pp.params.m, nk:] = sk.r2
        block[pp.params.m :, :] = np.eye(2 * nk, dtype=np.int64)
        lhs = mat_mul_mod(mats.full(), block, q)
        hg = np.concatenate([mat_mul_mod(pp.h[0], pp.gad.G, q), mat_mul_mod(pp.h[1], pp.gad.G, q)], axis=1)
        assert np.array_equal(lhs, hg)


def test_extract_randomized(demo, demo_keys):
    pp, msk = demo
    ida, _, ska, _ = demo_keys
    other = extract(pp, msk, ida, Rng(99))
    assert check_user_key(pp, other)
    assert not np.array_equal(other.r1, ska.r1)


def test_extract_zero_identity(demo):
    pp, msk = demo
    with pytest.raises(ZeroIdentity):
        extract(pp, msk, np.zeros(8, dtype=np.int64), Rng(1))


def test_encrypt_deterministic_given_rng(demo):
    pp, _ = demo
    m = np.random.default_rng(1).integers(0, 2, pp.params.nk)
    ident = np.arange(1, 9)
    a = encrypt(pp, ident, m, Rng(7))
    b = encrypt(pp, ident, m, Rng(7))
    assert np.array_equal(a.b, b.b) and a.level == 0
    assert a.b.shape == (pp.params.ct_len,)
    assert np.all((a.b >= 0) & (a.b < 2 * pp.params.q))


def test_encrypt_zero_message_nonzero(demo):
    pp, _ = demo
    ct = encrypt(pp, np.arange(1, 9), np.zeros(pp.params.nk, dtype=np.int64), Rng(8))
    assert ct.b.any()


def test_encrypt_length_mismatch(demo):
    pp, _ = demo
    with pytest.raises(ValueError):
        encrypt(pp, np.arange(1, 9), np.zeros(5, dtype=np.int64), Rng(9))
    with pytest.raises(ZeroIdentity):
        encrypt(pp, np.zeros(8, dtype=np.int64), np.zeros(pp.params.nk, dtype=np.int64), Rng(9))


def test_decrypt_roundtrip(demo, demo_keys):
    pp, _ = demo
    ida, _, ska, _ = demo_keys
    rng = Rng(10)
    for _ in range(100):
        m = rng.uniform_mod(2, pp.params.nk)
        assert np.array_equal(decrypt(pp, ska, encrypt(pp, ida, m, rng)), m)


def test_sample_noise_shape(demo):
    pp, _ = demo
    e = sample_noise(pp.params, Rng(11))
    assert e.shape == (pp.params.ct_len,)
    t_bar, t0, _, _ = pp.params.thresholds(0)
    assert np.linalg.norm(e[: pp.params.mbar]) < t_bar


def test_uniform_ciphertexts_rejected(demo, demo_keys):
    pp, _ = demo
    ida, _, ska, _ = demo_keys
    rng = Rng(12)
    checks = set()
    for _ in range(100):
        ct = Ciphertext(rng.uniform_mod(2 * pp.params.q, pp.params.ct_len), 0, ida)
        with pytest.raises(DecryptionError) as info:
            decrypt(pp, ska, ct)
        checks.add(info.value.check)
    assert checks <= {"invert", "norm", "lattice", "integrity", "codec"}


def test_decrypt_zero_identity(demo, demo_keys):
    pp, _ = demo
    ida, _, ska, _ = demo_keys
    ct = encrypt(pp, ida, np.zeros(pp.params.nk, dtype=np.int64), Rng(13))
    ct.target = np.zeros(8, dtype=np.int64)
    with pytest.raises(DecryptionError) as info:
        decrypt(pp, ska, ct)
    assert info.value.check == "identity"


def test_decrypt_malformed(demo, demo_keys):
    pp, _ = demo
    ida, _, ska, _ = demo_keys
    for ct in (
        Ciphertext(np.zeros(3, dtype=np.int64), 0, ida),
        Ciphertext(np.full(pp.params.ct_len, 2 * pp.params.q), 0, ida),
        Ciphertext(np.zeros(pp.params.ct_len, dtype=np.int64), 2, ida),
    ):
        with pytest.raises(DecryptionError) as info:
            decrypt(pp, ska, ct)
        assert info.value.check == "form"


@pytest.mark.slow
def test_wrong_key_rejection(demo, demo_keys):
    pp, _ = demo
    ida, idb, ska, skb = demo_keys
    rng = Rng(14)
    silent = 0
    for _ in range(1000):
        m = rng.uniform_mod(2, pp.params.nk)
        ct = encrypt(pp, ida, m, rng)
        ct.target = idb  # forged label: the ciphertext claims to be for idb
        try:
            out = decrypt(pp, skb, ct)
        except DecryptionError:
            continue
        silent += np.array_equal(out, m)
    assert silent <= 10


def test_wrong_key_label_mismatch(demo, demo_keys):
    pp, _ = demo
    ida, _, _, skb = demo_keys
    ct = encrypt(pp, ida, np.zeros(pp.params.nk, dtype=np.int64), Rng(15))
    with pytest.raises(DecryptionError) as info:
        decrypt(pp, skb, ct)
    assert info.value.check == "identity"


@pytest.fixture(scope="module")
def demo_rekey(demo, demo_keys):
    pp, _ = demo
    ida, idb, ska, _ = demo_keys
    return rekeygen(pp, ska, ida, idb, Rng(16))


def test_rekey_algebra(demo, demo_keys, demo_rekey):
    pp, _ = demo
    ida, idb, _, _ = demo_keys
    rk = demo_rekey
    q = pp.params.q
    assert rk.structure_ok()
    assert check_rekey(pp, rk)
    ai = identity_matrices(pp, ida).full()
    aj = identity_matrices(pp, idb).full()
    assert np.array_equal(mat_mul_mod(ai, rk.mat, q), aj)


def test_rekey_first_column_block(demo, demo_keys, demo_rekey):
    pp, _ = demo
    ida, idb, _, _ = demo_keys
    rk = demo_rekey
    q = pp.params.q
    mi = identity_matrices(pp, ida)
    stack = np.concatenate([rk.block(0, 0), rk.block(1, 0), rk.block(2, 0)], axis=0)
    lhs = mat_mul_mod(mi.rekey_matrix(pp).matrix(), stack, q)
    h_j = identity_matrices(pp, idb).h_id
    rhs = (pp.abar_p + mat_mul_mod(h_j, pp.gad.G, q)) % q
    assert np.array_equal(lhs, rhs)


def test_rekey_refusals(demo, demo_keys):
    pp, _ = demo
    ida, idb, ska, _ = demo_keys
    with pytest.raises(SelfDelegation):
        rekeygen(pp, ska, ida, ida, Rng(17))
    with pytest.raises(IdentityMismatch):
        rekeygen(pp, ska, idb, ida, Rng(17))
    with pytest.raises(ZeroIdentity):
        rekeygen(pp, ska, ida, np.zeros(8, dtype=np.int64), Rng(17))


def test_reencrypt_refusals(demo, demo_keys, demo_rekey):
    pp, _ = demo
    ida, idb, _, _ = demo_keys
    ct = encrypt(pp, ida, np.zeros(pp.params.nk, dtype=np.int64), Rng(18))
    out = reencrypt(demo_rekey, ct)
    assert out.level == 1 and np.array_equal(out.target, idb)
    assert out.b.shape == ct.b.shape
    with pytest.raises(HopLimitExceeded):
        reencrypt(demo_rekey, out)
    wrong = encrypt(pp, idb, np.zeros(pp.params.nk, dtype=np.int64), Rng(18))
    with pytest.raises(IdentityMismatch):
        reencrypt(demo_rekey, wrong)


def test_identity_rekey_preserves_decryption(demo, demo_keys):
    pp, _ = demo
    ida, _, ska, _ = demo_keys
    p = pp.params
    rk = ReKey(ida, ida, np.eye(p.ct_len, dtype=np.int64), p.mbar, p.nk, p.q)
    assert rk.structure_ok() and check_rekey(pp, rk)
    rng = Rng(19)
    for _ in range(10):
        m = rng.uniform_mod(2, p.nk)
        out = reencrypt(rk, encrypt(pp, ida, m, rng))
        assert out.level == 1
        assert np.array_equal(decrypt(pp, ska, out), m)


def test_reencrypt_error_decomposition(toy):
    # white-box: with known (s, e), b' = 2 s^T A_j + e rk + (0, 0, 0, q t) mod 2q
    pp, msk = toy
    p = pp.params
    q, mb, nk = p.q, p.mbar, p.nk
    rng = Rng(20)
    ida = np.array([1, 2, 3, 4])
    idb = np.array([5, 0, 0, 1])
    sk = extract(pp, msk, ida, rng)
    rk = rekeygen(pp, sk, ida, idb, rng)
    m = rng.uniform_mod(2, nk)
    s = rng.uniform_mod(q, p.n)
    e = sample_noise(p, rng)
    ct = encrypt_with(pp, ida, m, s, e)
    out = reencrypt(rk, ct)

    e_tilde = e @ rk.mat
    e0b, e0p, e1, e2 = e[:mb], e[mb : mb + nk], e[mb + nk : mb + 2 * nk], e[mb + 2 * nk :]
    assert np.array_equal(e_tilde[:mb], e0b)
    for c in range(3):
        want = e0b @ rk.block(0, c) + e0p @ rk.block(1, c) + e1 @ rk.block(2, c)
        if c == 2:
            want = want + e2
        got = e_tilde[mb + c * nk : mb + (c + 1) * nk]
        assert np.array_equal(got, want)

    aj = identity_matrices(pp, idb).full()
    zero_ct = encrypt_with(pp, idb, np.zeros(nk, dtype=np.int64), s, np.zeros(p.ct_len, dtype=np.int64))
    assert np.array_equal(zero_ct.b, 2 * mat_mul_mod(aj.T, s, q) % (2 * q))
    msg_part = encrypt_with(pp, idb, m, np.zeros(p.n, dtype=np.int64), np.zeros(p.ct_len, dtype=np.int64)).b
    assert np.array_equal(out.b, (zero_ct.b + e_tilde + msg_part) % (2 * q))


def test_no_inverse_rekey_operation():
    public = {name for name in dir(scheme) if not name.startswith("_")}
    ops = {name for name in public if callable(getattr(scheme, name))}
    assert {"setup", "extract", "encrypt", "decrypt", "rekeygen", "reencrypt"} <= ops
    for name in ops:
        lowered = name.lower()
        assert not any(word in lowered for word in ("invert_rekey", "reverse", "inverse_rk", "rk_inverse"))
    assert not any(hasattr(ReKey, attr) for attr in ("invert", "reverse", "inverse"))
