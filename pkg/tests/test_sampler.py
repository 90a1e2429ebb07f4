import math

import numpy as np
import pytest
from scipy import stats

from ibupre import _kernels
from ibupre.sampler import (
    GaussParam,
    InternalSamplerFailure,
    Rng,
    sample_z,
    sample_z_matrix,
    sample_z_vec,
    smoothing_r,
    std_of,
)
from ibupre.trapdoor import largest_singular_value


def rho(x, s, c=0.0):
    return np.exp(-math.pi * (np.asarray(x, dtype=float) - c) ** 2 / s**2)


def chi2_pvalue(samples, s, c=0.0, lo=-50, hi=50):
    ks = np.arange(lo, hi + 1)
    p = rho(ks, s, c)
    p /= p.sum()
    counts = np.array([(samples == k).sum() for k in ks])
    exp = p * samples.size
    # merge sparse tails into their neighbours
    keep = exp >= 5
    obs_c = list(counts[keep])
    exp_c = list(exp[keep])
    obs_c.append(counts[~keep].sum())
    exp_c.append(exp[~keep].sum())
    return stats.chisquare(obs_c, exp_c).pvalue


def test_smoothing_constant():
    assert smoothing_r(4) == pytest.approx(math.sqrt(math.log(8 * 2**36) / math.pi))
    assert 2.9 < smoothing_r(8) < 3.0


def test_gauss_param_validation():
    with pytest.raises(ValueError):
        GaussParam(0.0)


def test_tiny_width_is_degenerate():
    rng = Rng(1)
    out = sample_z_vec(np.zeros(1000), 0.01, rng)
    assert not out.any()
    assert sample_z(GaussParam(0.01), rng) == 0


def test_tiny_width_rounds_to_nearest():
    out = sample_z_vec(np.array([0.0, 0.45, 0.55, -2.3]), 0.01, Rng(2))
    assert out.tolist() == [0, 0, 1, -2]


def test_chi_square_against_rho(backend):
    x = sample_z_vec(np.zeros(100_000), 4.0, Rng(3))
    assert chi2_pvalue(x, 4.0) > 0.001


def test_center_half():
    x = sample_z_vec(np.full(100_000, 0.5), 4.0, Rng(4))
    assert abs(x.mean() - 0.5) < 0.05


@pytest.mark.parametrize("s", [2.0, 4.0, 11.5])
def test_variance_within_ten_percent(s):
    x = sample_z_matrix(1, 100_000, GaussParam(s), Rng(5))
    assert abs(x.var() / std_of(s) ** 2 - 1) < 0.10


def test_tail_cut():
    for s in (0.3, 1.0, 4.0, 100.0):
        x = sample_z_vec(np.full(50_000, 0.25), s, Rng(6))
        assert np.abs(x - 0.25).max() <= 12 * s


def test_determinism():
    a = sample_z_matrix(5, 7, GaussParam(3.3, 0.2), Rng(b"\x01" * 32))
    b = sample_z_matrix(5, 7, GaussParam(3.3, 0.2), Rng(b"\x01" * 32))
    assert np.array_equal(a, b)
    assert a.shape == (5, 7)


def test_spawned_streams_differ():
    rng = Rng(9)
    child = rng.spawn()
    assert rng.key() != child.key()


def test_matrix_shape_validation():
    with pytest.raises(ValueError):
        sample_z_matrix(0, 3, GaussParam(1.0), Rng(1))


def test_backends_bit_identical():
    if not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    centers = np.linspace(-5, 5, 2001)
    sig = np.linspace(0.05, 40, 2001)
    prev = _kernels.set_backend("numba")
    try:
        a = _kernels.sample_z_batch(centers, sig, 12345)
        _kernels.set_backend("numpy")
        b = _kernels.sample_z_batch(centers, sig, 12345)
    finally:
        _kernels.set_backend(prev)
    assert np.array_equal(a, b)


def test_attempt_limit(monkeypatch):
    monkeypatch.setattr(_kernels, "MAX_ATTEMPTS", 0)
    prev = _kernels.set_backend("numpy")
    try:
        with pytest.raises(InternalSamplerFailure):
            _kernels.sample_z_batch(np.zeros(3), 1.0, 1)
    finally:
        _kernels.set_backend(prev)


def test_singular_value_proxy():
    # m x nk Gaussian matrix at s = r: s1 <= 1.1 r (sqrt m + sqrt nk + 6) in >= 99% of trials
    n, mbar, nk = 4, 68, 68
    r = smoothing_r(n)
    rng = Rng(11)
    ok = 0
    for _ in range(100):
        mat = sample_z_matrix(mbar, nk, GaussParam(r), rng)
        ok += largest_singular_value(mat) <= 1.1 * r * (math.sqrt(mbar) + math.sqrt(nk) + 6)
    assert ok >= 99


def test_rng_position_advances():
    rng = Rng(1)
    p0 = rng.position
    rng.uniform_mod(17, 1000)
    assert rng.position != p0
