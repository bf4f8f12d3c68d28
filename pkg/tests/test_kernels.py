import os
import subprocess
import sys

import numpy as np
import pytest

from cslid import kernels
from cslid.ctc import extend_with_blanks
from cslid.kernels import numpy_impl

from .conftest import random_emissions

numba_impl = kernels.numba_impl
needs_numba = pytest.mark.skipif(numba_impl is None, reason="numba backend unavailable")


def _loop_ema(z, decay, reverse):
    out = np.zeros_like(z)
    order = range(len(z) - 1, -1, -1) if reverse else range(len(z))
    acc = np.zeros(z.shape[1])
    for t in order:
        acc = decay * acc + (1 - decay) * z[t]
        out[t] = acc
    return out


@pytest.mark.parametrize("reverse", [False, True])
def test_numpy_ema_matches_loop(rng, reverse):
    z = rng.normal(size=(25, 4))
    np.testing.assert_allclose(numpy_impl.ema_scan(z, 0.9, reverse), _loop_ema(z, 0.9, reverse), atol=1e-12)


@needs_numba
class TestBackendsAgree:
    def test_alpha_beta(self, rng):
        for _ in range(50):
            T, K = int(rng.integers(1, 30)), int(rng.integers(2, 6))
            lp = random_emissions(rng, T, K)
            ext = extend_with_blanks(rng.integers(1, K, size=int(rng.integers(1, 6))))
            for name in ("ctc_alpha", "ctc_beta"):
                a = getattr(numpy_impl, name)(lp, ext, 0)
                b = getattr(numba_impl, name)(lp, ext, 0)
                np.testing.assert_allclose(a, b, atol=1e-12)

    def test_viterbi(self, rng):
        for _ in range(50):
            T, K = int(rng.integers(4, 30)), int(rng.integers(2, 6))
            lp = random_emissions(rng, T, K)
            ext = extend_with_blanks(rng.integers(1, K, size=2))
            pa, sa = numpy_impl.ctc_viterbi(lp, ext, 0)
            pb, sb = numba_impl.ctc_viterbi(lp, ext, 0)
            np.testing.assert_array_equal(pa, pb)
            assert sa == pytest.approx(sb, abs=1e-12)

    @pytest.mark.parametrize("reverse", [False, True])
    def test_ema(self, rng, reverse):
        z = rng.normal(size=(40, 6))
        np.testing.assert_allclose(numpy_impl.ema_scan(z, 0.7, reverse), numba_impl.ema_scan(z, 0.7, reverse), atol=1e-12)


def test_env_flag_selects_numpy():
    code = "from cslid import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "CSLID_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_default_backend_is_numba():
    assert kernels.BACKEND == ("numpy" if os.environ.get("CSLID_DISABLE_NUMBA") else "numba")
