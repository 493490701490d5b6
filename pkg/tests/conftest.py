import numpy as np
import pytest

from kmshrink.kernels import KernelSpec, gram

ALL_KERNELS = [KernelSpec.lin(), KernelSpec.poly(2), KernelSpec.poly(3), KernelSpec.rbf(2.0)]
KERNEL_IDS = ["lin", "poly2", "poly3", "rbf"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_gram(rng, n, kernel=None, d=3):
    kernel = kernel or KernelSpec.rbf(2.0)
    return gram(kernel, rng.normal(size=(n, d)))
