import numpy as np
import pytest

from silosynth import fixedpoint as fx
from silosynth.fixedpoint import FixedPointConfig
from silosynth.rng import CounterStream, derive_key
from silosynth.runtime import run_parties
from silosynth.sharing import ShareMatrix, reconstruct, share_values

FP = FixedPointConfig()


def run3(body, seed=77, timeout=300.0):
    return run_parties(body, master_seed=seed, fp=FP, timeout=timeout)


def shared(values, tag, namespace="t"):
    return share_values(fx.to_u64(values), CounterStream(derive_key(9000, namespace, tag)))


def shared_matrix(genes, labels, tag, namespace="tm"):
    """Share a cleartext dataset: gene columns encoded fixed-point or integer bins."""
    cells = np.concatenate([fx.to_u64(genes), fx.to_u64(labels).reshape(-1, 1)], axis=1)
    parts = share_values(cells, CounterStream(derive_key(9000, namespace, tag)))
    return [ShareMatrix(p, genes.shape[1]) for p in parts]


def open_matrix(results):
    return reconstruct([r.data for r in results])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
