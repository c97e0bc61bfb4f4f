import heapq
import random

import pytest

from models.entities import Event, EventKind, LocationStatus, Priority
from utils.engine import init_state, run, step
from utils.errors import TimeRegressionError
from utils.scenario import build_scenario


def _trace_pod(pod_id, namespace="ns-a", gpu_count=1, duration=100, arrival=0, priority="guaranteed"):
    return {"id": pod_id, "namespace": namespace, "cpu": 1000, "mem": 1024, "gpu_count": gpu_count,
            "duration": duration, "arrival": arrival, "priority": priority}


def _document(trace=None, generator=None, faults=(), policy=None, horizon=1000, storage=None, seed=0):
    workload = {"seed": seed}
    if trace is not None:
        workload["trace"] = trace
    if generator is not None:
        workload["generator"] = generator
    doc = {
        "inventory": {
            "regions": [{"id": "r1"}],
            "locations": [{"id": "loc-a", "region": "r1"}, {"id": "loc-b", "region": "r1"},
                          {"id": "loc-c", "region": "r1"}],
            "gpu_models": [{"id": "a10"}, {"id": "a100", "reserved": True}],
            "nodes": [
                {"id": "n1", "location": "loc-a", "cpu_capacity": 8000, "mem_capacity": 2**34,
                 "gpus": [{"model": "a10", "count": 2}]},
                {"id": "n2", "location": "loc-b", "cpu_capacity": 8000, "mem_capacity": 2**34,
                 "gpus": [{"model": "a100", "count": 2}]},
                {"id": "n3", "location": "loc-c", "cpu_capacity": 8000, "mem_capacity": 2**34},
            ],
        },
        "namespaces": [{"id": "ns-a", "grants": ["a100"]}, {"id": "ns-b"}, {"id": "osg"}],
        "workload": workload,
        "policy": policy or {},
        "faults": list(faults),
        "horizon_seconds": horizon,
    }
    if storage:
        doc["storage"] = storage
    return doc


def _scenario(**kwargs):
    return build_scenario(_document(**kwargs))


def test_single_pod_runs_to_completion():
    state, report = run(_scenario(trace=[_trace_pod("p1", duration=100, arrival=10)]))
    assert state.counts() == {"arrived": 1, "completed": 1, "running": 0, "pending": 0, "failed": 0}
    assert report.gpu_seconds == 100


def test_running_pod_at_horizon_is_clipped():
    state, report = run(_scenario(trace=[_trace_pod("p1", duration=5000)], horizon=1000))
    assert state.counts()["running"] == 1
    assert report.gpu_seconds == 1000


def test_completion_frees_room_for_waiting_pod():
    trace = [_trace_pod("p1", gpu_count=2, duration=100), _trace_pod("p2", gpu_count=2, duration=100)]
    state, _ = run(_scenario(trace=trace, policy={"reservations_enabled": True},
                             faults=[{"time": 0, "location": "loc-b", "action": "outage"}]))
    starts = {d.pod_id: d.start for d in state.decisions}
    assert starts == {"p1": 0, "p2": 100}


def test_outage_requeues_guaranteed_at_head():
    trace = [_trace_pod("g", gpu_count=2, duration=500),
             _trace_pod("o", namespace="osg", gpu_count=1, duration=500, priority="opportunistic"),
             _trace_pod("w", gpu_count=2, duration=100, arrival=5)]
    faults = [{"time": 50, "location": "loc-a", "action": "outage"},
              {"time": 60, "location": "loc-b", "action": "outage"}]
    scenario = _scenario(trace=trace, faults=faults, policy={"backfill_enabled": True})
    state = init_state(scenario)
    pods = {p.id: p for p in scenario.trace.pods}
    while state.events and state.events[0].time <= 60:
        step(state, heapq.heappop(state.events), pods)
    assert state.interruptions >= 2
    queued = [p.id for p in state.queue]
    assert queued.index("g") < queued.index("o")
    assert not state.running


def test_stale_completion_is_ignored():
    trace = [_trace_pod("g", gpu_count=2, duration=100)]
    faults = [{"time": 50, "location": "loc-a", "action": "outage"},
              {"time": 60, "location": "loc-a", "action": "recovery"}]
    state, report = run(_scenario(trace=trace, faults=faults, horizon=1000))
    # Restarted at 60, so the first completion at 100 must not end it.
    assert state.completed == 1
    assert report.gpu_seconds == 2 * 50 + 2 * 100


def test_time_regression_is_rejected():
    state = init_state(_scenario(trace=[]))
    step(state, Event(100, EventKind.SCHEDULING_TICK))
    with pytest.raises(TimeRegressionError):
        step(state, Event(50, EventKind.SCHEDULING_TICK))


def test_events_at_equal_times_follow_kind_priority():
    events = sorted([Event(5, EventKind.SCHEDULING_TICK), Event(5, EventKind.POD_ARRIVAL, "p"),
                     Event(5, EventKind.POD_COMPLETION, "q"), Event(5, EventKind.LOCATION_RECOVERY, "l")])
    assert [e.kind for e in events] == [EventKind.POD_COMPLETION, EventKind.LOCATION_RECOVERY,
                                        EventKind.POD_ARRIVAL, EventKind.SCHEDULING_TICK]


def test_preempted_pod_restarts_later():
    trace = [_trace_pod("o", namespace="osg", gpu_count=2, duration=300, priority="opportunistic"),
             _trace_pod("g", namespace="ns-b", gpu_count=2, duration=100, arrival=10)]
    faults = [{"time": 0, "location": "loc-b", "action": "outage"}]
    state, report = run(_scenario(trace=trace, faults=faults, policy={"backfill_enabled": True}))
    assert report.preemptions == 1
    assert state.completed == 2
    starts = [(d.pod_id, d.start) for d in state.decisions]
    assert starts == [("o", 0), ("g", 10), ("o", 110)]


def test_pod_displaced_before_it_starts_is_not_a_preemption():
    trace = [_trace_pod("p1", namespace="osg", gpu_count=2, duration=300, priority="opportunistic"),
             _trace_pod("p2", namespace="ns-b", gpu_count=2, duration=100)]
    faults = [{"time": 0, "location": "loc-b", "action": "outage"}]
    state, report = run(_scenario(trace=trace, faults=faults, policy={"backfill_enabled": True}))
    assert report.preemptions == 0
    # Same arrival time: p1 is queued first, then displaced by p2 within the cycle.
    assert [(d.pod_id, d.start) for d in state.decisions] == [("p2", 0), ("p1", 100)]


def test_storage_outage_triggers_re_replication():
    storage = {"replication_factor": 2, "object_counts": {"r1": 30}}
    faults = [{"time": 10, "location": "loc-a", "action": "outage"}]
    state, report = run(_scenario(trace=[], faults=faults, storage=storage))
    affected = sum(1 for o in state.objects if "loc-a" in state.placements[o.id].locations[:2])
    assert report.replicas_added == affected
    assert report.max_unavailable_objects == 0


def _random_document(rng):
    faults = []
    for location in ("loc-a", "loc-b", "loc-c"):
        if rng.random() < 0.3:
            down = rng.randrange(0, 5000)
            faults.append({"time": down, "location": location, "action": "outage"})
            if rng.random() < 0.7:
                faults.append({"time": down + rng.randrange(1, 3000), "location": location,
                               "action": "recovery"})
    generator = {
        "namespaces": ["ns-a", "ns-b"],
        "pod_count": rng.randint(0, 40),
        "arrival_rate": rng.choice([0.005, 0.01, 0.05]),
        "duration_min": 60,
        "duration_max": 3000,
        "opportunistic_fraction": rng.random() * 0.5,
        "opportunistic_namespace": "osg",
        "gpu_request_weights": {0: 0.2, 1: 0.5, 2: 0.3},
        "model_preferences": [{"models": [], "weight": 0.7}, {"models": ["a100"], "weight": 0.3}],
    }
    policy = {
        "ordering": rng.choice(["fifo", "fair-share"]),
        "quotas_enabled": rng.random() < 0.3,
        "reservations_enabled": rng.random() < 0.5,
        "backfill_enabled": rng.random() < 0.6,
        "fair_share_halflife": 3600,
    }
    doc = _document(generator=generator, faults=faults, policy=policy, horizon=rng.randint(500, 8000),
                    seed=rng.randrange(10_000))
    doc["namespaces"][1]["quota"] = {"gpu": 2}
    return doc


def test_pod_conservation_on_random_scenarios():
    rng = random.Random(99)
    for _ in range(1000):
        scenario = build_scenario(_random_document(rng))
        state, _ = run(scenario)
        counts = state.counts()
        assert counts["arrived"] == counts["completed"] + counts["running"] + counts["pending"] + counts["failed"]
        # Generated pods always request cpu, so every running pod has open records.
        assert {r.pod_id for r in state.ledger.open_records()} == set(state.running)
        for pod_id in state.running:
            binding = state.cluster.binding(pod_id)
            assert binding is not None
            assert state.cluster.is_schedulable(binding.node_id)
            assert not (binding.pod.priority == Priority.OPPORTUNISTIC
                        and not scenario.policy.backfill_enabled)


def test_runs_are_deterministic():
    rng = random.Random(1)
    document = _random_document(rng)
    first_state, first = run(build_scenario(document))
    second_state, second = run(build_scenario(document))
    assert first.utilization_series == second.utilization_series
    assert first_state.decisions == second_state.decisions
    assert first.gpu_seconds == second.gpu_seconds


def test_location_status_restored_after_recovery():
    faults = [{"time": 10, "location": "loc-a", "action": "outage"},
              {"time": 20, "location": "loc-a", "action": "recovery"}]
    state, _ = run(_scenario(trace=[], faults=faults))
    assert state.cluster.locations["loc-a"].status == LocationStatus.UP
    assert state.capacity.at(15) == 2 and state.capacity.at(25) == 4


def test_empty_trace_gives_zero_utilization():
    state, report = run(_scenario(trace=[]))
    assert report.gpu_utilization == 0.0
    assert len(state.ledger) == 0


def test_completion_returns_node_allocation_to_zero():
    state, _ = run(_scenario(trace=[_trace_pod("p1", duration=100)]))
    alloc = state.cluster.allocations["n1"]
    assert (alloc.cpu, alloc.mem, alloc.gpu_total, alloc.pods) == (0, 0, 0, {})


def test_outage_fails_every_pod_at_the_location():
    trace = [_trace_pod("p1", gpu_count=1, duration=500), _trace_pod("p2", gpu_count=1, duration=500)]
    faults = [{"time": 50, "location": "loc-a", "action": "outage"}]
    # Reservations keep both pods off the a100 node.
    doc = _document(trace=trace, faults=faults, policy={"reservations_enabled": True}, horizon=100)
    doc["namespaces"][0]["grants"] = []
    state, report = run(build_scenario(doc))
    assert report.interruptions == 2
    assert [p.id for p in state.queue] == ["p1", "p2"]
    assert state.cluster.locations["loc-a"].status == LocationStatus.DOWN
