import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from persuade.model import ConcaveCardinalityFunction, CoverageFunction, Instance, TableFunction, tiny_instance

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def make_instance(u, funcs, prior=None, types=None):
    """Instance from per-receiver gain arrays ``u[r]`` of shape (m_r, d)."""
    u = [np.asarray(x, dtype=float) for x in u]
    d = u[0].shape[1]
    prior = np.full(d, 1.0 / d) if prior is None else np.asarray(prior, dtype=float)
    types = types or tuple(tuple(f"k{j}" for j in range(x.shape[0])) for x in u)
    return Instance(types, tuple(f"theta{i}" for i in range(d)), prior, tuple(u), tuple(funcs))


def disjoint_coverage(n):
    return CoverageFunction(n, tuple(frozenset({r}) for r in range(n)), tuple([1.0 / n] * n))


@pytest.fixture
def tiny():
    return tiny_instance()


@pytest.fixture
def zero_instance():
    """Two receivers, two types each, sender indifferent to everything."""
    z = TableFunction(2, (0.0, 0.0, 0.0, 0.0))
    return make_instance([[[0.3, -0.4], [-0.2, 0.5]], [[0.1, -0.9], [0.7, 0.2]]], [z, z], prior=[0.4, 0.6])


@pytest.fixture
def eager_instance():
    """Receivers always prefer to act; sender values differ per state."""
    g = ConcaveCardinalityFunction((0.0, 0.6, 0.9))
    cov = disjoint_coverage(2)
    return make_instance([[[0.5, 0.2], [0.1, 0.0]], [[0.3, 0.9], [0.0, 0.4]]], [g, cov], prior=[0.3, 0.7])
