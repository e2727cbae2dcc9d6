import json

import numpy as np
import pytest

from lqgcap import make_system


TWO_STATE_JSTAR = 27.329777167977188


def two_state(j=1.0):
    """Scalar-input two-state benchmark plant; j scales the input feedthrough."""
    return make_system(
        F=np.array([[1.4, 0.0], [0.0, 0.4]]),
        G=np.array([[1.0], [1.0]]),
        H=np.array([[1.0, 1.0]]),
        J=np.array([[j]]),
        W=np.eye(2),
        V=np.array([[1.0]]),
        Q=np.eye(2),
        R=np.array([[1.0]]),
    )


@pytest.fixture
def awgn_system():
    # memoryless unit-noise channel: no plant, no cost, feedthrough only
    return make_system(
        F=np.zeros((1, 1)), G=np.zeros((1, 1)),
        H=np.zeros((1, 1)), J=np.eye(1),
        W=np.zeros((1, 1)), V=np.eye(1))


@pytest.fixture
def parallel_system():
    # two independent feedthrough channels with gains 1 and 2
    return make_system(
        F=np.zeros((2, 2)), G=np.zeros((2, 2)),
        H=np.zeros((2, 2)), J=np.diag([1.0, 2.0]),
        W=np.zeros((2, 2)), V=np.eye(2))


@pytest.fixture
def two_state_system():
    return two_state()


def random_system(rng):
    """Small random plant with all assumptions holding by construction."""
    r = int(rng.integers(1, 4))
    p = int(rng.integers(1, 3))
    el = int(rng.integers(1, 3))
    F = rng.normal(size=(r, r)) * 0.9 / max(1.0, np.sqrt(r))
    G = rng.normal(size=(r, p))
    H = rng.normal(size=(el, r))
    J = rng.normal(size=(el, p)) * rng.integers(0, 2)
    Wf = rng.normal(size=(r, r + 1))
    W = Wf @ Wf.T / (r + 1)
    Vf = rng.normal(size=(el, el + 1))
    V = Vf @ Vf.T / (el + 1) + 0.3 * np.eye(el)
    Qf = rng.normal(size=(r, r))
    Q = Qf @ Qf.T / r * rng.integers(0, 2)
    R = np.eye(p)
    return make_system(F=F, G=G, H=H, J=J, W=W, V=V, Q=Q, R=R)


def write_config(path, sys):
    doc = {k: getattr(sys, k).tolist()
           for k in ("F", "G", "H", "J", "W", "V", "L", "Q", "R")}
    path.write_text(json.dumps(doc))
    return str(path)
