from fractions import Fraction

import pytest

from hpndss.model import initial_marking
from hpndss.sample import example_scenario, relay_net, sender_ordering, study_scenario

F = Fraction


@pytest.fixture(scope="session")
def relay():
    return relay_net()


@pytest.fixture(scope="session")
def relay_marking(relay):
    return initial_marking(relay)


@pytest.fixture()
def baseline():
    return example_scenario()


@pytest.fixture()
def study():
    return study_scenario()


def ordered_study(*sends, deadline=500):
    return study_scenario(deadline).with_overrides(policies=sender_ordering(*sends))
