"""Hypothesis strategies for random walk kernels."""

import math

import numpy as np
from hypothesis import assume
from hypothesis import strategies as st

from greenldp.cgf import hull_position
from greenldp.model import JumpDistribution, WalkModel


@st.composite
def kernels(draw, dim=1, min_size=2, max_size=5, interior_zero=True, min_drift=0.05):
    lo = min_size if dim == 1 else max(min_size, 3)
    support = draw(st.lists(
        st.tuples(*[st.integers(-3, 3)] * dim), min_size=lo, max_size=max_size, unique=True))
    weights = draw(st.lists(st.floats(0.05, 1.0), min_size=len(support), max_size=len(support)))
    total = math.fsum(weights)
    probs = [w / total for w in weights]
    steps = np.array(support, dtype=float)
    if interior_zero:
        assume(np.linalg.matrix_rank(steps - steps.mean(axis=0)) == dim)
        assume(hull_position(steps, np.zeros(dim)) == "interior")
    k = JumpDistribution(tuple(support), tuple(probs))
    assume(np.linalg.norm(k.mean) >= min_drift)
    return k


@st.composite
def models(draw, dim=1, **kw):
    return WalkModel(dim, draw(kernels(dim, **kw)))
