from __future__ import annotations

import numpy as np
import pytest

from voiroute.costs import builtin_profile, normalized_costs
from voiroute.harness import train_bank
from voiroute.synthworld import builtin_world, generate


@pytest.fixture(scope="session")
def edge_cloud_costs():
    return normalized_costs(builtin_profile("edge-cloud"))


@pytest.fixture(scope="session")
def small_monotone_corpus():
    spec = builtin_world("monotone", n_questions=600, seed=11)
    return spec, generate(spec)


@pytest.fixture(scope="session")
def small_monotone_bank(small_monotone_corpus):
    spec, corpus = small_monotone_corpus
    return train_bank(corpus.dataset.records, spec.fidelities)
