"""
Scheduler module for the stretched-cluster simulator.

One scheduling cycle walks the ordered pending queue and, per pod, runs
quota admission, node filtering, bin-pack scoring and placement, falling
back to preempting opportunistic pods for guaranteed work.
"""
import itertools
import logging
from math import comb
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from models.entities import Ordering, PodSpec, PolicyConfig, Priority, ScheduleDecision

logger = logging.getLogger(__name__)

# Weights for the post-placement utilization score.
SCORE_WEIGHTS = {"cpu": 1.0, "mem": 1.0, "gpu": 2.0}

# Above this many subsets for one victim count, fall back to a greedy pick.
MAX_VICTIM_SUBSETS = 50_000


@dataclass(frozen=True)
class Candidate:
    """A feasible node for a pod, with post-placement utilization fractions."""
    node_id: str
    model: Optional[str]
    cpu_after: float = 0.0
    mem_after: float = 0.0
    gpu_after: float = 0.0

    @property
    def score(self):
        return (SCORE_WEIGHTS["cpu"] * self.cpu_after
                + SCORE_WEIGHTS["mem"] * self.mem_after
                + SCORE_WEIGHTS["gpu"] * self.gpu_after)


@dataclass(frozen=True)
class Preemption:
    node_id: str
    model: Optional[str]
    victims: Tuple[str, ...]
    gpu_seconds: int


@dataclass
class CycleResult:
    decisions: List[ScheduleDecision] = field(default_factory=list)
    pending: List[PodSpec] = field(default_factory=list)
    evicted: list = field(default_factory=list)


def _model_order(pod: PodSpec, node):
    """Models on the node the pod would accept, in preference order."""
    on_node = [m for m, _ in node.gpus]
    if pod.acceptable_models:
        return [m for m in pod.acceptable_models if m in on_node]
    return on_node


def _reservation_blocks(pod: PodSpec, model, cluster, namespaces, policy):
    if not policy.reservations_enabled or not pod.is_guaranteed:
        return False
    if not cluster.is_reserved(model):
        return False
    namespace = namespaces.get(pod.namespace)
    return namespace is None or model not in namespace.grants


def _pick_model(pod, node, free_gpus, cluster, namespaces, policy):
    """
    First acceptable model with enough free GPUs that the reservation
    gate allows; returns (ok, model).
    """
    if pod.gpu_count == 0:
        return True, None
    for model in _model_order(pod, node):
        if free_gpus.get(model, 0) < pod.gpu_count:
            continue
        if _reservation_blocks(pod, model, cluster, namespaces, policy):
            continue
        return True, model
    return False, None


def _affinity_ok(pod, node_id, cluster):
    return pod.region_affinity is None or cluster.region_of(node_id) == pod.region_affinity


def _candidate(pod, node, model, cluster):
    alloc = cluster.allocations[node.id]
    gpu_total = node.gpu_total
    return Candidate(
        node_id=node.id,
        model=model,
        cpu_after=(alloc.cpu + pod.cpu) / node.cpu_capacity,
        mem_after=(alloc.mem + pod.mem) / node.mem_capacity,
        gpu_after=(alloc.gpu_total + pod.gpu_count) / gpu_total if gpu_total else 0.0,
    )


def filter_nodes(pod: PodSpec, cluster, namespaces, policy: PolicyConfig):
    """
    List the nodes a pod can be placed on right now.

    A node passes when its location is up, the region affinity matches,
    free cpu/mem/GPUs suffice for some acceptable model, and (with
    reservations on) a guaranteed pod's namespace holds a grant for a
    reserved model. Opportunistic pods always pass the reservation gate.

    Returns:
        list: Candidate per feasible node, in node id order
    """
    candidates = []
    for node_id, node in cluster.nodes.items():
        if not cluster.is_schedulable(node_id) or not _affinity_ok(pod, node_id, cluster):
            continue
        free_cpu, free_mem, free_gpus = cluster.free(node_id)
        if pod.cpu > free_cpu or pod.mem > free_mem:
            continue
        ok, model = _pick_model(pod, node, free_gpus, cluster, namespaces, policy)
        if ok:
            candidates.append(_candidate(pod, node, model, cluster))
    return candidates


def score_nodes(pod: PodSpec, candidates):
    """
    Order candidates by descending bin-pack score, ties by node id.

    The score is the weighted sum of post-placement cpu, memory and GPU
    utilization (weights 1/1/2), so fuller nodes come first.
    """
    return sorted(candidates, key=lambda c: (-c.score, c.node_id))


def fair_share_order(queue, usage, namespaces):
    """
    Sort pending pods by namespace decayed usage over share weight.

    Args:
        queue (list): Pending pods
        usage (dict): namespace id -> decayed usage
        namespaces (dict): namespace id -> Namespace

    Returns:
        list: Pods, least-served namespace first, then arrival, then id
    """
    def share(pod):
        namespace = namespaces.get(pod.namespace)
        weight = namespace.share_weight if namespace else 1.0
        return usage.get(pod.namespace, 0.0) / weight

    return sorted(queue, key=lambda p: (share(p), p.arrival, p.id))


def _remaining_gpu_seconds(binding, now):
    return binding.pod.gpu_count * max(0, binding.start + binding.pod.duration - now)


def _fits_after(pod, node, model, free, released):
    free_cpu, free_mem, free_gpus = free
    cpu = free_cpu + sum(b.pod.cpu for b in released)
    mem = free_mem + sum(b.pod.mem for b in released)
    if pod.cpu > cpu or pod.mem > mem:
        return False
    if model is None:
        return True
    gpus = free_gpus.get(model, 0) + sum(b.pod.gpu_count for b in released if b.model == model)
    return gpus >= pod.gpu_count


def _greedy_victims(pod, node, model, free, victims):
    """Largest-first eviction; used only when exhaustive search is too big."""
    chosen = []
    for binding in sorted(victims, key=lambda b: (-b.pod.gpu_count, -b.pod.cpu, b.pod.id)):
        chosen.append(binding)
        if _fits_after(pod, node, model, free, chosen):
            return chosen
    return None


def preempt(pod: PodSpec, node_id, cluster, namespaces=None, policy=None, now=0):
    """
    Find the cheapest set of opportunistic pods to evict from a node.

    The set has the fewest pods possible; among equally small sets it
    frees the least remaining GPU-seconds of work, then the smallest
    pod ids. Guaranteed pods are never candidates.

    Args:
        pod (PodSpec): Guaranteed pod that needs room
        node_id (str): Node to evict from
        cluster (Cluster): Current allocation state
        namespaces (dict): Namespace table, for the reservation gate
        policy (PolicyConfig): Active policy, for the reservation gate
        now (int): Current time, for remaining-work accounting

    Returns:
        Preemption: victims and the model to assign, or None if infeasible
    """
    if not pod.is_guaranteed:
        return None
    namespaces = namespaces or {}
    policy = policy or PolicyConfig()
    if not cluster.is_schedulable(node_id) or not _affinity_ok(pod, node_id, cluster):
        return None
    node = cluster.nodes[node_id]
    if pod.cpu > node.cpu_capacity or pod.mem > node.mem_capacity:
        return None
    free = cluster.free(node_id)
    victims = [b for b in cluster.bindings_on(node_id) if b.pod.priority == Priority.OPPORTUNISTIC]
    if not victims:
        return None

    models = [None] if pod.gpu_count == 0 else [
        m for m in _model_order(pod, node)
        if not _reservation_blocks(pod, m, cluster, namespaces, policy)
    ]
    best = None
    for model in models:
        if not _fits_after(pod, node, model, free, victims):
            continue
        found = None
        for k in range(1, len(victims) + 1):
            if comb(len(victims), k) > MAX_VICTIM_SUBSETS:
                chosen = _greedy_victims(pod, node, model, free, victims)
                found = _rank(chosen, now) if chosen else None
                break
            feasible = [_rank(list(subset), now)
                        for subset in itertools.combinations(victims, k)
                        if _fits_after(pod, node, model, free, subset)]
            if feasible:
                found = min(feasible)
                break
        if found is None:
            continue
        option = (found[0], found[1], found[2], model)
        if best is None or option[:3] < best[:3]:
            best = option
    if best is None:
        return None
    count, gpu_seconds, victim_ids, model = best
    return Preemption(node_id, model, victim_ids, gpu_seconds)


def _rank(subset, now):
    ids = tuple(sorted(b.pod.id for b in subset))
    return (len(subset), sum(_remaining_gpu_seconds(b, now) for b in subset), ids)


def _within_quota(pod, cluster, namespaces):
    namespace = namespaces.get(pod.namespace)
    if namespace is None or namespace.quota is None:
        return True
    quota = namespace.quota
    cpu, mem, gpus = cluster.namespace_usage(pod.namespace, Priority.GUARANTEED)
    if quota.cpu is not None and cpu + pod.cpu > quota.cpu:
        return False
    if quota.mem is not None and mem + pod.mem > quota.mem:
        return False
    if quota.gpu is not None and gpus + pod.gpu_count > quota.gpu:
        return False
    return True


def order_queue(queue, usage, namespaces, policy: PolicyConfig):
    if policy.ordering == Ordering.FAIR_SHARE:
        return fair_share_order(queue, usage, namespaces)
    return list(queue)


def schedule_cycle(queue, cluster, namespaces, usage, policy: PolicyConfig, now=0):
    """
    Run one scheduling pass over the pending queue.

    Per pod: quota admission (guaranteed pods, when quotas are on), then
    filter, score and place on the best node; failing that a guaranteed
    pod may evict opportunistic pods when backfill is on. Opportunistic
    pods are only placed when backfill is on. Every placement is applied
    to the cluster at once so later pods see it.

    Args:
        queue (list): Pending pods in queue order
        cluster (Cluster): Cluster to place onto, mutated in place
        namespaces (dict): namespace id -> Namespace
        usage (dict): namespace id -> decayed usage, for fair-share
        policy (PolicyConfig): Active policy
        now (int): Current simulation time

    Returns:
        CycleResult: decisions, the pods left pending, and the bindings
            evicted to make room (to be requeued by the caller)
    """
    result = CycleResult()
    placed_now: Dict[str, ScheduleDecision] = {}
    requeue: List[PodSpec] = []

    for pod in order_queue(queue, usage, namespaces, policy):
        if pod.priority == Priority.OPPORTUNISTIC and not policy.backfill_enabled:
            result.pending.append(pod)
            continue
        if pod.is_guaranteed and policy.quotas_enabled and not _within_quota(pod, cluster, namespaces):
            logger.debug("Pod %s held back by quota of %s", pod.id, pod.namespace)
            result.pending.append(pod)
            continue

        candidates = filter_nodes(pod, cluster, namespaces, policy)
        if candidates:
            best = score_nodes(pod, candidates)[0]
            cluster.bind(pod, best.node_id, best.model, now)
            decision = ScheduleDecision(pod.id, best.node_id, best.model, now)
            placed_now[pod.id] = decision
            result.decisions.append(decision)
            continue

        if pod.is_guaranteed and policy.backfill_enabled:
            options = [p for p in (preempt(pod, node_id, cluster, namespaces, policy, now)
                                   for node_id in cluster.nodes) if p is not None]
            if options:
                chosen = min(options, key=lambda p: (len(p.victims), p.gpu_seconds, p.node_id))
                evicted_ids = []
                for victim_id in chosen.victims:
                    binding = cluster.unbind(victim_id)
                    if victim_id in placed_now:
                        # Placed earlier in this same cycle: undo, it never started.
                        result.decisions.remove(placed_now.pop(victim_id))
                        requeue.append(binding.pod)
                    else:
                        result.evicted.append(binding)
                        evicted_ids.append(victim_id)
                cluster.bind(pod, chosen.node_id, chosen.model, now)
                decision = ScheduleDecision(pod.id, chosen.node_id, chosen.model, now,
                                            tuple(evicted_ids))
                placed_now[pod.id] = decision
                result.decisions.append(decision)
                logger.debug("Pod %s preempted %s on %s", pod.id, chosen.victims, chosen.node_id)
                continue

        result.pending.append(pod)

    result.pending.extend(requeue)
    return result
