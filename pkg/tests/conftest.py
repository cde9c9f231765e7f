import numpy as np
import pytest

from mmnoma.channel import SystemConfig, dft_codebook, synthesize_beam_users
from mmnoma.clustering import cluster_users, select_beams
from mmnoma.errors import MmNomaError
from mmnoma.noma_core import zf_detection


def feasible_plans(config: SystemConfig, count: int, seed: int = 0, max_tries: int = 500):
    """First ``count`` drops that cluster cleanly and admit ZF detection."""
    codebook = dft_codebook(config.n_antennas, config.codebook_size)
    beams = select_beams(config.codebook_size, config.n_rf, config.beam_family)
    plans = []
    for d in range(max_tries):
        try:
            plan = cluster_users(codebook, synthesize_beam_users(config, beams, [seed, d]).h, beams)
            zf_detection(plan)
        except MmNomaError:
            continue
        plans.append(plan)
        if len(plans) == count:
            return plans
    raise RuntimeError("not enough feasible drops")


@pytest.fixture
def tiny_config():
    return SystemConfig(n_antennas=8, codebook_size=8, n_rf=2).with_snr_db(10)


@pytest.fixture
def desk_config():
    return SystemConfig(n_antennas=16, codebook_size=16, n_rf=2).with_snr_db(10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
