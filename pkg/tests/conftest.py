"""Shared fixtures and schedule randomization helpers."""
from pathlib import Path

import numpy as np
import pytest

from modesched import ModeSchedule
from modesched.models import vehicle_initial_state, vehicle_system

REPO = Path(__file__).resolve().parent.parent
THREE_MACHINE = REPO / "demos" / "networks" / "three_machine.json"


@pytest.fixture(scope="session")
def vehicle():
    return vehicle_system()


@pytest.fixture(scope="session")
def vehicle_x0():
    return vehicle_initial_state()


def random_schedule(rng, horizon, num_modes, n_switches):
    """Random sequence of distinct-neighbor modes with sorted times."""
    while True:
        times = np.sort(rng.uniform(0.0, horizon, n_switches))
        if n_switches == 0 or (np.diff(times, prepend=0.0,
                                       append=horizon) > 1e-3).all():
            break
    seq = [int(rng.integers(1, num_modes + 1))]
    for _ in range(n_switches):
        step = int(rng.integers(1, num_modes))
        seq.append((seq[-1] - 1 + step) % num_modes + 1)
    return ModeSchedule(tuple(seq), tuple(times), horizon, num_modes)
