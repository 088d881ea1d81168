import pytest

from flowseek.environments import make_env
from flowseek.environments.toydag import diamond_instance, two_terminal_instance
from flowseek.exploration import sample_trajectory_mixed
from flowseek.policy import PolicyParams, init_params
from flowseek.rngutil import substream


@pytest.fixture
def toy_instance():
    return two_terminal_instance()


@pytest.fixture
def toy_env(toy_instance):
    return make_env(toy_instance)


@pytest.fixture
def diamond_env():
    inst = diamond_instance()
    return inst, make_env(inst)


def rollout(env, seed=0, eps=1.0, beta=1.0, tag="t"):
    """Uniform-random complete trajectory (eps=1 ignores the zero policy)."""
    params = init_params("linear", env.feature_dim)
    return sample_trajectory_mixed(params, env, eps, beta, substream(seed, tag))


def random_params(variant, env, hidden=4, seed=0, scale=0.3):
    base = init_params(variant, env.feature_dim, hidden, seed=seed)
    noise = substream(seed, "params-noise").normal(0.0, scale, base.vector.shape)
    return PolicyParams(variant, env.feature_dim, hidden, base.vector + noise)
