import itertools
import random

from models.entities import LocationStatus, Ordering, PolicyConfig, Priority
from tests.conftest import make_cluster, make_namespaces, make_pod, node_doc
from utils.cluster import set_location_status
from utils.scheduler import (
    fair_share_order, filter_nodes, preempt, schedule_cycle, score_nodes,
)

OPP = Priority.OPPORTUNISTIC
MODELS = ("a10", "a100", "h200")


def test_places_on_fullest_feasible_node(namespaces):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 4)]),
                            node_doc("n2", "loc-a", gpus=[("a10", 4)])])
    cluster.bind(make_pod("busy", gpu_count=2), "n2", "a10", 0)
    result = schedule_cycle([make_pod("p", gpu_count=1)], cluster, namespaces, {}, PolicyConfig())
    assert [(d.pod_id, d.node_id, d.assigned_model) for d in result.decisions] == [("p", "n2", "a10")]


def test_score_ties_break_by_node_id(namespaces):
    cluster = make_cluster([node_doc("n2", "loc-a"), node_doc("n1", "loc-a")])
    pod = make_pod("p")
    ranked = score_nodes(pod, filter_nodes(pod, cluster, namespaces, PolicyConfig()))
    assert [c.node_id for c in ranked] == ["n1", "n2"]


def test_acceptable_model_order_is_respected(namespaces):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 4), ("h200", 4)])])
    pod = make_pod("p", gpu_count=1, models=["h200", "a10"])
    result = schedule_cycle([pod], cluster, namespaces, {}, PolicyConfig())
    assert result.decisions[0].assigned_model == "h200"


def test_reservation_blocks_grantless_guaranteed_pod(two_node_cluster, namespaces, backfill_policy):
    pod = make_pod("p", namespace="ns-b", gpu_count=1, models=["a100"])
    result = schedule_cycle([pod], two_node_cluster, namespaces, {}, backfill_policy)
    assert result.decisions == [] and [p.id for p in result.pending] == ["p"]


def test_reservation_admits_granted_and_opportunistic(two_node_cluster, namespaces, backfill_policy):
    granted = make_pod("g", namespace="ns-a", gpu_count=2, models=["a100"])
    opportunistic = make_pod("o", namespace="osg", gpu_count=2, models=["a100"], priority=OPP)
    result = schedule_cycle([granted, opportunistic], two_node_cluster, namespaces, {}, backfill_policy)
    assert {d.pod_id: d.node_id for d in result.decisions} == {"g": "n2", "o": "n2"}


def test_opportunistic_waits_without_backfill(two_node_cluster, namespaces):
    pod = make_pod("o", namespace="osg", gpu_count=1, priority=OPP)
    result = schedule_cycle([pod], two_node_cluster, namespaces, {}, PolicyConfig())
    assert result.decisions == [] and result.pending == [pod]


def test_region_affinity_never_violated(namespaces):
    cluster = make_cluster([node_doc("n1", "loc-a"), node_doc("n2", "loc-b")],
                           regions=["west", "east"], locations={"loc-a": "west", "loc-b": "east"})
    result = schedule_cycle([make_pod("p", region="east")], cluster, namespaces, {}, PolicyConfig())
    assert result.decisions[0].node_id == "n2"


def test_quota_holds_back_guaranteed_pod(two_node_cluster, namespaces):
    policy = PolicyConfig(quotas_enabled=True)
    pods = [make_pod("p1", namespace="ns-b", gpu_count=2), make_pod("p2", namespace="ns-b", gpu_count=1)]
    result = schedule_cycle(pods, two_node_cluster, namespaces, {}, policy)
    assert [d.pod_id for d in result.decisions] == ["p1"]
    assert [p.id for p in result.pending] == ["p2"]


def test_quota_ignores_opportunistic_usage(two_node_cluster, namespaces):
    policy = PolicyConfig(quotas_enabled=True, backfill_enabled=True)
    two_node_cluster.bind(make_pod("o", namespace="ns-b", gpu_count=2, priority=OPP), "n1", "a10", 0)
    result = schedule_cycle([make_pod("p", namespace="ns-b", gpu_count=2)], two_node_cluster,
                            namespaces, {}, policy)
    assert [d.pod_id for d in result.decisions] == ["p"]


def test_preempt_picks_fewest_victims(namespaces, backfill_policy):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 4)])])
    cluster.bind(make_pod("o1", namespace="osg", gpu_count=1, priority=OPP), "n1", "a10", 0)
    cluster.bind(make_pod("o2", namespace="osg", gpu_count=1, priority=OPP), "n1", "a10", 0)
    cluster.bind(make_pod("o3", namespace="osg", gpu_count=2, priority=OPP), "n1", "a10", 0)
    choice = preempt(make_pod("g", gpu_count=2), "n1", cluster, namespaces, backfill_policy, now=0)
    assert choice.victims == ("o3",)


def test_preempt_prefers_least_remaining_work(namespaces, backfill_policy):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 2)])])
    cluster.bind(make_pod("o1", namespace="osg", gpu_count=1, priority=OPP, duration=1000), "n1", "a10", 0)
    cluster.bind(make_pod("o2", namespace="osg", gpu_count=1, priority=OPP, duration=100), "n1", "a10", 0)
    choice = preempt(make_pod("g", gpu_count=1), "n1", cluster, namespaces, backfill_policy, now=50)
    assert choice.victims == ("o2",)
    assert choice.gpu_seconds == 50


def test_preempt_never_evicts_guaranteed(namespaces, backfill_policy):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 2)])])
    cluster.bind(make_pod("g1", gpu_count=2), "n1", "a10", 0)
    assert preempt(make_pod("g2", gpu_count=1), "n1", cluster, namespaces, backfill_policy) is None


def test_preemption_in_cycle_reports_evicted(namespaces, backfill_policy):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 2)])])
    cluster.bind(make_pod("o1", namespace="osg", gpu_count=2, priority=OPP), "n1", "a10", 0)
    result = schedule_cycle([make_pod("g", gpu_count=2)], cluster, namespaces, {}, backfill_policy, now=10)
    assert result.decisions[0].preempted_victims == ("o1",)
    assert [b.pod.id for b in result.evicted] == ["o1"]
    assert cluster.binding("o1") is None


def test_victim_placed_in_same_cycle_is_requeued(namespaces, backfill_policy):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 2)])])
    queue = [make_pod("o1", namespace="osg", gpu_count=2, priority=OPP),
             make_pod("g", gpu_count=2, arrival=1)]
    result = schedule_cycle(queue, cluster, namespaces, {}, backfill_policy)
    assert [d.pod_id for d in result.decisions] == ["g"]
    assert [p.id for p in result.pending] == ["o1"]
    assert result.evicted == []
    assert result.decisions[0].preempted_victims == ()


def test_fair_share_orders_by_usage_over_weight():
    namespaces = make_namespaces("a", "b", "c", weights={"a": 4.0})
    queue = [make_pod("pa", namespace="a", arrival=0), make_pod("pb", namespace="b", arrival=1),
             make_pod("pc", namespace="c", arrival=2)]
    ordered = fair_share_order(queue, {"a": 100.0, "b": 50.0}, namespaces)
    # a: 25, b: 50, c: 0
    assert [p.id for p in ordered] == ["pc", "pa", "pb"]


def test_fair_share_cycle_serves_underused_namespace_first():
    namespaces = make_namespaces("heavy", "light")
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a10", 1)])])
    queue = [make_pod("h", namespace="heavy", gpu_count=1), make_pod("l", namespace="light", gpu_count=1, arrival=5)]
    policy = PolicyConfig(ordering=Ordering.FAIR_SHARE)
    result = schedule_cycle(queue, cluster, namespaces, {"heavy": 1e6}, policy)
    assert [d.pod_id for d in result.decisions] == ["l"]


# -- generated instances ----------------------------------------------------


def _random_instance(rng, max_nodes, max_pods):
    regions = ["r1", "r2"]
    locations = {f"loc-{i}": regions[i % 2] for i in range(3)}
    nodes = []
    for i in range(rng.randint(1, max_nodes)):
        gpus = [(m, rng.randint(1, 4)) for m in rng.sample(MODELS, rng.randint(0, 2))]
        nodes.append(node_doc(f"n{i}", rng.choice(sorted(locations)), cpu=rng.randint(2, 8) * 1000,
                              mem=rng.randint(2, 8), gpus=gpus))
    cluster = make_cluster(nodes, regions, locations, {"a10": False, "a100": True, "h200": False})
    for loc in locations:
        if rng.random() < 0.15:
            set_location_status(cluster, loc, LocationStatus.DOWN)
    namespaces = make_namespaces("ns-a", "ns-b", "osg", grants={"ns-a": ["a100"]})
    pods = []
    for i in range(rng.randint(1, max_pods)):
        gpu_count = rng.choice([0, 1, 1, 2, 3])
        pods.append(make_pod(
            f"p{i}",
            namespace=rng.choice(["ns-a", "ns-b", "osg"]),
            cpu=rng.randint(0, 4) * 1000,
            mem=rng.randint(0, 4),
            gpu_count=gpu_count,
            models=rng.sample(MODELS, rng.randint(0, 2)) if gpu_count else (),
            region=rng.choice([None, None, "r1", "r2"]),
            priority=rng.choice([Priority.GUARANTEED, OPP]),
            duration=rng.randint(1, 1000),
            arrival=i,
        ))
    policy = PolicyConfig(
        ordering=rng.choice([Ordering.FIFO, Ordering.FAIR_SHARE]),
        quotas_enabled=False,
        reservations_enabled=rng.random() < 0.6,
        backfill_enabled=rng.random() < 0.7,
    )
    return cluster, namespaces, pods, policy


def _check_safety(cluster, namespaces, policy, result, guaranteed_ids):
    for node_id, node in cluster.nodes.items():
        alloc = cluster.allocations[node_id]
        assert alloc.cpu <= node.cpu_capacity and alloc.mem <= node.mem_capacity
        for model, used in alloc.gpus.items():
            assert used <= node.gpu_capacity.get(model, 0)
    for binding in result.evicted:
        assert binding.pod.priority == OPP
    for decision in result.decisions:
        assert not set(decision.preempted_victims) & guaranteed_ids
        binding = cluster.binding(decision.pod_id)
        pod = binding.pod
        if pod.gpu_count and pod.acceptable_models:
            assert decision.assigned_model in pod.acceptable_models
        if pod.region_affinity:
            assert cluster.region_of(decision.node_id) == pod.region_affinity
        if policy.reservations_enabled and pod.is_guaranteed and pod.gpu_count \
                and cluster.is_reserved(decision.assigned_model):
            assert decision.assigned_model in namespaces[pod.namespace].grants
        assert cluster.is_schedulable(decision.node_id)


def test_scheduler_safety_properties():
    rng = random.Random(20240501)
    cases = 0
    while cases < 10_000:
        cluster, namespaces, pods, policy = _random_instance(rng, max_nodes=4, max_pods=10)
        half = len(pods) // 2
        guaranteed_ids = {p.id for p in pods if p.is_guaranteed}
        first = schedule_cycle(pods[:half], cluster, namespaces, {}, policy, now=0)
        _check_safety(cluster, namespaces, policy, first, guaranteed_ids)
        queue = first.pending + pods[half:] + [b.pod for b in first.evicted]
        usage = {"ns-a": rng.random() * 10, "ns-b": rng.random() * 10}
        second = schedule_cycle(queue, cluster, namespaces, usage, policy, now=10)
        _check_safety(cluster, namespaces, policy, second, guaranteed_ids)
        cases += 2


def test_disabling_reservations_only_adds_reserved_bindings():
    rng = random.Random(7)
    for _ in range(2000):
        cluster, namespaces, pods, policy = _random_instance(rng, max_nodes=4, max_pods=6)
        schedule_cycle(pods[: len(pods) // 2], cluster, namespaces, {}, policy, now=0)
        gated = PolicyConfig(reservations_enabled=True, backfill_enabled=True)
        ungated = PolicyConfig(reservations_enabled=False, backfill_enabled=True)
        for pod in pods[len(pods) // 2:]:
            with_gate = {c.node_id: c.model for c in filter_nodes(pod, cluster, namespaces, gated)}
            without = {c.node_id: c.model for c in filter_nodes(pod, cluster, namespaces, ungated)}
            assert set(with_gate) <= set(without)
            for node_id, model in without.items():
                if with_gate.get(node_id, "missing") != model:
                    assert pod.is_guaranteed and cluster.is_reserved(model)
                    assert model not in namespaces[pod.namespace].grants


def test_reservation_gate_holds_back_grantless_pod(namespaces):
    cluster = make_cluster([node_doc("n1", "loc-a", gpus=[("a100", 2)])], models={"a100": True})
    pod = make_pod("g", namespace="ns-b", gpu_count=1)
    gated = schedule_cycle([pod], cluster, namespaces, {}, PolicyConfig(reservations_enabled=True))
    assert gated.decisions == [] and [p.id for p in gated.pending] == ["g"]
    opened = schedule_cycle([pod], cluster, namespaces, {}, PolicyConfig())
    assert [(d.pod_id, d.assigned_model) for d in opened.decisions] == [("g", "a100")]


def _fits_somewhere(pod, cluster, namespaces, policy):
    """Exhaustive search over (node, opportunistic victim subset) pairs."""
    if not pod.is_guaranteed and not policy.backfill_enabled:
        return False
    for node_id, node in cluster.nodes.items():
        if not cluster.is_schedulable(node_id):
            continue
        if pod.region_affinity and cluster.region_of(node_id) != pod.region_affinity:
            continue
        victims = [b for b in cluster.bindings_on(node_id) if b.pod.priority == OPP]
        max_k = len(victims) if pod.is_guaranteed and policy.backfill_enabled else 0
        free_cpu, free_mem, free_gpus = cluster.free(node_id)
        for k in range(max_k + 1):
            for subset in itertools.combinations(victims, k):
                cpu = free_cpu + sum(b.pod.cpu for b in subset)
                mem = free_mem + sum(b.pod.mem for b in subset)
                if pod.cpu > cpu or pod.mem > mem:
                    continue
                if pod.gpu_count == 0:
                    return True
                for model, _ in node.gpus:
                    if pod.acceptable_models and model not in pod.acceptable_models:
                        continue
                    if policy.reservations_enabled and pod.is_guaranteed \
                            and cluster.is_reserved(model) \
                            and model not in namespaces[pod.namespace].grants:
                        continue
                    gpus = free_gpus.get(model, 0) + sum(b.pod.gpu_count for b in subset
                                                         if b.model == model)
                    if gpus >= pod.gpu_count:
                        return True
    return False


def test_pending_iff_no_feasible_placement():
    rng = random.Random(7)
    for _ in range(500):
        cluster, namespaces, pods, policy = _random_instance(rng, max_nodes=5, max_pods=8)
        for now, pod in enumerate(pods):
            expected = _fits_somewhere(pod, cluster, namespaces, policy)
            result = schedule_cycle([pod], cluster, namespaces, {}, policy, now=now)
            placed = any(d.pod_id == pod.id for d in result.decisions)
            assert placed == expected, (pod, policy)
            assert placed != (pod in result.pending)
