import numpy as np
import pytest

from stratperc.environment import EnvConfig, Hypothesis, realizable_noise
from stratperc.geometry import make_rng, sample_unit_sphere


def realizable_env(d: int, seed: int, c: float = 2.0) -> EnvConfig:
    u = sample_unit_sphere(d, make_rng(seed, 1))
    return EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=c,
                     noise=realizable_noise(), seed=seed)


def acute_start(cfg: EnvConfig, seed: int) -> np.ndarray:
    v0 = sample_unit_sphere(cfg.d, make_rng(seed, 2))
    return v0 if float(v0 @ cfg.u.normal) >= 0.0 else -v0


@pytest.fixture
def rng():
    return make_rng(12345)
