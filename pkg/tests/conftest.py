import numpy as np
import pytest

from ibupre import _kernels
from ibupre.sampler import Rng
from ibupre.scheme import extract, preset, setup


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture(scope="session")
def demo():
    params = preset("demo")
    pp, msk = setup(params, Rng(0xD3))
    return pp, msk


@pytest.fixture(scope="session")
def demo_keys(demo):
    pp, msk = demo
    rng = Rng(0xE1)
    ida = np.arange(1, pp.params.n + 1)
    idb = np.arange(3, pp.params.n + 3)
    return ida, idb, extract(pp, msk, ida, rng), extract(pp, msk, idb, rng)


@pytest.fixture(scope="session")
def toy():
    params = preset("toy")
    pp, msk = setup(params, Rng(0x70))
    return pp, msk
