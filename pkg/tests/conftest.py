"""Shared builders for the simulator tests."""
from pathlib import Path

import pytest

from models.entities import Namespace, PodSpec, PolicyConfig, Priority, Quota
from utils.cluster import load_inventory

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
SHIPPED = ("reference-fifo", "reservation-vs-fifo", "outage-resilience", "fairshare-demo")

GIB = 2**30


def node_doc(node_id, location, cpu=16000, mem=64 * GIB, gpus=()):
    return {
        "id": node_id,
        "location": location,
        "cpu_capacity": cpu,
        "mem_capacity": mem,
        "gpus": [{"model": m, "count": c} for m, c in gpus],
    }


def inventory_doc(nodes, regions=None, locations=None, models=None):
    """Inventory document; locations and regions default to what the nodes use."""
    if locations is None:
        locations = {n["location"]: "r1" for n in nodes}
    if regions is None:
        regions = sorted(set(locations.values()))
    if models is None:
        models = {}
    return {
        "regions": [{"id": r} for r in regions],
        "locations": [{"id": loc, "region": reg} for loc, reg in locations.items()],
        "gpu_models": [{"id": m, "reserved": reserved} for m, reserved in models.items()],
        "nodes": list(nodes),
    }


def make_cluster(nodes, regions=None, locations=None, models=None):
    return load_inventory(inventory_doc(nodes, regions, locations, models))


def make_pod(pod_id, namespace="ns-a", cpu=1000, mem=GIB, gpu_count=0, models=(),
             region=None, priority=Priority.GUARANTEED, duration=3600, arrival=0):
    return PodSpec(pod_id, namespace, cpu, mem, gpu_count, tuple(models), region,
                   Priority(priority), duration, arrival)


def make_namespaces(*ids, grants=None, quotas=None, weights=None):
    grants = grants or {}
    quotas = quotas or {}
    weights = weights or {}
    return {
        ns: Namespace(ns, quotas.get(ns), weights.get(ns, 1.0), frozenset(grants.get(ns, ())))
        for ns in ids
    }


@pytest.fixture
def two_node_cluster():
    """One region, two locations, an a10 node and a reserved a100 node."""
    return make_cluster(
        [node_doc("n1", "loc-a", gpus=[("a10", 4)]),
         node_doc("n2", "loc-b", gpus=[("a100", 4)])],
        models={"a10": False, "a100": True},
    )


@pytest.fixture
def namespaces():
    return make_namespaces("ns-a", "ns-b", "osg", grants={"ns-a": ["a100"]},
                           quotas={"ns-b": Quota(gpu=2)})


@pytest.fixture
def backfill_policy():
    return PolicyConfig(backfill_enabled=True, reservations_enabled=True)
