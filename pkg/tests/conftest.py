import numpy as np
import pytest

from framelets import frames, netbuild


def make_spec(kappa=2, r=2, m=6, skip=False, nonlinearity="relu", q=None, m_list=None):
    """Small spec with channels growing r-fold per layer unless given."""
    if q is None:
        q = [1]
        for _ in range(kappa):
            q.append(q[-1] * r)
    if m_list is None:
        m_list = [m] * (kappa + 1)
    return netbuild.NetworkSpec(kappa=kappa, r=r, q=q, m=m_list, skip=skip,
                                nonlinearity=nonlinearity)


def make_frame_pair(kappa=2, r=2, m=8, skip=False, alpha=1.0, seed=0,
                    pooling="orthogonal", nonlinearity="none"):
    """(spec, bank) satisfying the frame conditions."""
    spec = make_spec(kappa=kappa, r=r, m=m, skip=skip, nonlinearity=nonlinearity)
    cfg = frames.FrameConfig.for_spec(spec, alpha=alpha, seed=seed, pooling=pooling)
    return spec, frames.frame_bank(spec, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
