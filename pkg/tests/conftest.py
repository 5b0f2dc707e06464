import json
import pathlib

import numpy as np
import pytest

from dpflow.dynamics import decompose
from dpflow.rf_model import featurize, init_features, sample_data

GOLDEN = pathlib.Path(__file__).parent / "golden" / "anchors.json"


@pytest.fixture(scope="session")
def anchors() -> dict:
    with open(GOLDEN) as fh:
        return json.load(fh)


class SmallInstance:
    """One modest problem (n=60, d=8, p=120) shared across read-only tests."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.ds = sample_data(60, 8, seed)
        self.fm = init_features(120, 8, seed)
        self.phi = featurize(self.fm, self.ds.X)
        self.sd = decompose(self.fm, self.ds, phi=self.phi)
        self.lam_max = float(self.sd.eigvals_K[0])
        self.eta = 0.1 * self.ds.n / (2.0 * self.lam_max)


@pytest.fixture(scope="session")
def inst() -> SmallInstance:
    return SmallInstance()


@pytest.fixture(scope="session")
def rng_factory():
    def make(seed: int) -> np.random.Generator:
        return np.random.default_rng(seed)

    return make
