from __future__ import annotations

import pytest

from mlforge.blobstore.store import Storage
from mlforge.clock import SimClock
from mlforge.control import ControlPlane, PlaneConfig
from mlforge.scheduler.master import Master
from mlforge.scheduler.types import NodeDescriptor


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture
def storage(clock):
    return Storage(clock=clock)


@pytest.fixture
def master(clock):
    return Master(clock=clock)


def make_master(clock, node_gpus: list[int], cpus: int = 8, mem: int = 32768) -> Master:
    m = Master(clock=clock)
    for i, gpus in enumerate(node_gpus):
        m.register_node(NodeDescriptor(f"n{i}", gpus, cpus, mem))
    return m


def make_plane(
    n_nodes: int = 3,
    gpus: int = 8,
    driver: str = "eager",
    **kwargs,
) -> ControlPlane:
    config = PlaneConfig.default_cluster(n_nodes=n_nodes, gpus=gpus, driver=driver, **kwargs)
    return ControlPlane(config)


@pytest.fixture
def plane():
    return make_plane()


@pytest.fixture
def manual_plane():
    return make_plane(driver="manual")


def push_mnist(plane, board=("acc", "maximize")):
    return plane.storage.push_dataset(
        "mnist", {"train.csv": b"1,2,3\n", "test.csv": b"4,5,6\n"}, board_config=board
    )


CODE = {"main.py": b"train()\n", "lib/util.py": b"helper()\n"}
