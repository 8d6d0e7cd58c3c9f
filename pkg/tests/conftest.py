import numpy as np
import pytest

from apulse.kernels import Family, KernelSpec

FAMILIES = [Family.RBF, Family.MATERN52, Family.IMQ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spec(rng, family, noise=None):
    return KernelSpec(
        family,
        variance=float(np.exp(rng.uniform(-1, 1))),
        lengthscale=float(np.exp(rng.uniform(np.log(0.1), np.log(1.0)))),
        noise_variance=float(np.exp(rng.uniform(np.log(1e-3), np.log(0.5)))) if noise is None else noise,
    )
