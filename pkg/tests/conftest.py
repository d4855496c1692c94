import numpy as np
import pytest

from gridcaps.capsnet import CapsPlan
from gridcaps.dataset import CaseBundle
from gridcaps.matpower import BusTopology

TOY_CASE = """
function mpc = toy2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0 1 1.0 0 0 1 1.06 0.94;
    2 1 20 5 0 0 1 1.0 0 0 1 1.06 0.94;
];
mpc.gen = [
    1 50 0 99 -99 1.0 100 1 100 0;
];
mpc.branch = [
    1 2 0.0 0.1 0.0 0 0 0 0 0 1 -360 360;
];
"""


@pytest.fixture(scope="session")
def ieee14():
    return CaseBundle.load("ieee14")


@pytest.fixture(scope="session")
def ieee39():
    return CaseBundle.load("ieee39")


@pytest.fixture(scope="session")
def ieee57():
    return CaseBundle.load("ieee57")


@pytest.fixture(scope="session")
def all_cases(ieee14, ieee39, ieee57):
    return {"ieee14": ieee14, "ieee39": ieee39, "ieee57": ieee57}


def make_toy_topology(x=0.1, load_mw=20.0):
    return BusTopology(
        bus_ids=(1, 2),
        generator_buses=(1,),
        load_buses=(2,),
        branches=((1, 2, x),),
        base_mva=100.0,
        loads_mw={1: 0.0, 2: load_mw},
        name="toy2",
    )


def reduced_caps_plan(routing_iters=5, dropout=0.1):
    """Small plan (P=8, Q=3) for gradient checks and toy training."""
    return CapsPlan(
        case="reduced",
        input_shape=(2, 20, 2),
        conv1_kernels=8, conv1_size=(1, 10), conv1_stride=(1, 10),
        dropout_rate=dropout,
        conv2_kernels=4, conv2_size=(1, 1), conv2_stride=(1, 1),
        primary_count=8, primary_dim=2,
        digit_count=3, digit_dim=4,
        routing_iters=routing_iters,
    ).validate()


def toy_windows(rng, n_per_class, class_profiles, noise=0.002):
    """Synthetic separable windows: one constant profile per class."""
    xs, ys = [], []
    for label, profile in enumerate(class_profiles):
        base = np.asarray(profile, dtype=np.float64)
        for _ in range(n_per_class):
            xs.append(base + noise * rng.standard_normal(base.shape))
            ys.append(label)
    order = rng.permutation(len(xs))
    x = np.stack(xs)[order].astype(np.float32)
    y = np.asarray(ys, dtype=np.int64)[order]
    return x, y
