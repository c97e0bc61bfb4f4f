"""
Discrete-event engine for the stretched-cluster simulator.

Drives pod arrivals, scheduling ticks, completions, location outages and
recoveries, preemption requeues and metric sampling. Events are processed
in (time, kind priority, payload) order, so a run is a pure function of
its scenario.
"""
import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional

from models.entities import (
    Event, EventKind, LocationStatus, Ordering, PodSpec, Resource, ScheduleDecision,
)
from utils.accounting import (
    CapacityTimeline, SegmentCache, UsageLedger, aggregate, aggregate_seconds, decayed_usage,
    namespace_rollup, utilization,
)
from utils.cluster import Cluster, capacity, set_location_status
from utils.errors import TimeRegressionError
from utils.scheduler import schedule_cycle
from utils.storage import apply_changes, count_unavailable, place_replicas, re_replicate
from utils.workload import validate_pod

logger = logging.getLogger(__name__)


@dataclass
class SimState:
    """
    Mutable state of one simulation run.

    Invariants: clock never decreases; every running pod has a decision
    and a binding in the cluster; the ledger has open records exactly for
    running pods that consume something.
    """
    clock: int
    cluster: Cluster
    namespaces: dict
    policy: object
    horizon: int
    queue: Deque[PodSpec] = field(default_factory=deque)
    running: Dict[str, ScheduleDecision] = field(default_factory=dict)
    ledger: UsageLedger = field(default_factory=UsageLedger)
    objects: tuple = ()
    placements: dict = field(default_factory=dict)
    capacity: CapacityTimeline = field(default_factory=CapacityTimeline)
    events: List[Event] = field(default_factory=list)
    arrived: int = 0
    completed: int = 0
    failed: List[str] = field(default_factory=list)
    interruptions: int = 0
    preemptions: int = 0
    replicas_added: int = 0
    decisions: List[ScheduleDecision] = field(default_factory=list)
    utilization_series: List[tuple] = field(default_factory=list)
    pending_series: List[tuple] = field(default_factory=list)
    availability_series: List[tuple] = field(default_factory=list)
    _tick_times: set = field(default_factory=set)

    def push(self, event: Event):
        heapq.heappush(self.events, event)

    def request_tick(self, time):
        if time not in self._tick_times:
            self._tick_times.add(time)
            self.push(Event(time, EventKind.SCHEDULING_TICK))

    @property
    def pending(self):
        return len(self.queue)

    def unavailable_objects(self):
        return count_unavailable(self.objects, self.placements, self.cluster)

    def counts(self):
        return {
            "arrived": self.arrived,
            "completed": self.completed,
            "running": len(self.running),
            "pending": len(self.queue),
            "failed": len(self.failed),
        }


@dataclass
class RunReport:
    """Metrics of a finished run."""
    scenario: str
    policy: dict
    horizon: int
    gpu_utilization: float
    cpu_utilization: float
    gpu_hours: float
    cpu_hours: float
    gpu_seconds: int
    preemptions: int
    interruptions: int
    replicas_added: int
    max_unavailable_objects: int
    availability_incidents: int
    counts: dict
    namespace_usage: object  # pd.DataFrame
    utilization_series: list
    pending_series: list
    availability_series: list

    def row(self, variant=None):
        """One comparison row for this run."""
        return {
            "variant": variant or self.scenario,
            "utilization": self.gpu_utilization,
            "gpu_hours": self.gpu_hours,
            "pending": self.counts["pending"],
            "preemptions": self.preemptions,
        }


def _gpu_util_now(cluster):
    total = capacity(cluster).gpu_total
    if total == 0:
        return 0.0
    return cluster.allocated_totals().gpu_total / total


def _stop(state: SimState, pod_id, time):
    """Release a running pod and close its usage records."""
    binding = state.cluster.unbind(pod_id)
    state.ledger.close(pod_id, time)
    state.running.pop(pod_id, None)
    return binding


def _on_arrival(state: SimState, event: Event, pods: Dict[str, PodSpec]):
    pod = pods[event.payload]
    state.arrived += 1
    reason = validate_pod(pod, state.cluster, state.namespaces)
    if reason is not None:
        logger.warning("Pod %s rejected at arrival: %s", pod.id, reason.value)
        state.failed.append(pod.id)
        return
    state.queue.append(pod)
    state.request_tick(event.time)


def _on_completion(state: SimState, event: Event):
    decision = state.running.get(event.payload)
    # Stale if the pod was evicted or failed after this event was queued.
    if decision is None or decision.start != event.attempt:
        return
    _stop(state, event.payload, event.time)
    state.completed += 1
    state.request_tick(event.time)


def _on_outage(state: SimState, event: Event):
    location = event.payload
    if state.cluster.locations[location].status == LocationStatus.DOWN:
        return
    head, tail = [], []
    for node in state.cluster.nodes_at(location):
        for binding in state.cluster.bindings_on(node.id):
            _stop(state, binding.pod.id, event.time)
            state.interruptions += 1
            (head if binding.pod.is_guaranteed else tail).append(binding.pod)
    # Guaranteed pods go back to the head of the queue, opportunistic to the tail.
    state.queue.extendleft(reversed(sorted(head, key=lambda p: (p.arrival, p.id))))
    state.queue.extend(sorted(tail, key=lambda p: (p.arrival, p.id)))
    set_location_status(state.cluster, location, LocationStatus.DOWN)
    state.capacity.record(event.time, capacity(state.cluster))
    logger.info("Outage at %s (t=%d): %d pods failed and requeued", location, event.time,
                len(head) + len(tail))
    if state.objects:
        changes = re_replicate(state.objects, state.placements, state.cluster)
        state.placements = apply_changes(state.objects, state.placements, changes)
        state.replicas_added += len(changes)


def _on_recovery(state: SimState, event: Event):
    set_location_status(state.cluster, event.payload, LocationStatus.UP)
    state.capacity.record(event.time, capacity(state.cluster))
    logger.info("Recovery at %s (t=%d)", event.payload, event.time)
    state.request_tick(event.time)


def _usage_snapshot(state: SimState, now):
    if state.policy.ordering != Ordering.FAIR_SHARE:
        return {}
    has_gpus = any(n.gpus for n in state.cluster.nodes.values())
    resource = Resource.GPU if has_gpus else Resource.CPU
    return decayed_usage(state.ledger, now, state.policy.fair_share_halflife, resource)


def _on_tick(state: SimState, event: Event):
    state._tick_times.discard(event.time)
    if not state.queue:
        return
    now = event.time
    result = schedule_cycle(list(state.queue), state.cluster, state.namespaces,
                            _usage_snapshot(state, now), state.policy, now)
    for binding in result.evicted:
        state.ledger.close(binding.pod.id, now)
        state.running.pop(binding.pod.id, None)
    for decision in result.decisions:
        pod = state.cluster.binding(decision.pod_id).pod
        state.running[decision.pod_id] = decision
        state.ledger.open(pod, now)
        state.decisions.append(decision)
        state.push(Event(now + pod.duration, EventKind.POD_COMPLETION, pod.id, now))
    state.preemptions += sum(len(d.preempted_victims) for d in result.decisions)
    state.queue = deque(result.pending)
    # Preempted pods restart from scratch at the tail.
    state.queue.extend(b.pod for b in sorted(result.evicted, key=lambda b: (b.pod.arrival, b.pod.id)))


def step(state: SimState, event: Event, pods: Optional[Dict[str, PodSpec]] = None):
    """
    Apply one event to the state.

    Args:
        state (SimState): State to advance, mutated in place
        event (Event): Next event; its time must not precede the clock
        pods (dict): pod id -> PodSpec, needed for arrival events

    Returns:
        SimState: the same state

    Raises:
        TimeRegressionError: event.time < state.clock
    """
    if event.time < state.clock:
        raise TimeRegressionError(f"event at t={event.time} precedes clock t={state.clock}")
    state.clock = event.time
    state.ledger.clock = event.time
    if event.kind == EventKind.POD_ARRIVAL:
        _on_arrival(state, event, pods or {})
    elif event.kind == EventKind.POD_COMPLETION:
        _on_completion(state, event)
    elif event.kind == EventKind.LOCATION_OUTAGE:
        _on_outage(state, event)
    elif event.kind == EventKind.LOCATION_RECOVERY:
        _on_recovery(state, event)
    elif event.kind == EventKind.SCHEDULING_TICK:
        _on_tick(state, event)
    return state


def _sample(state: SimState, time):
    state.utilization_series.append((time, _gpu_util_now(state.cluster)))
    state.pending_series.append((time, len(state.queue)))
    if state.objects:
        state.availability_series.append((time, state.unavailable_objects()))


def init_state(scenario):
    """Build the initial state of a scenario: placements, capacity, event queue."""
    cluster = scenario.cluster
    state = SimState(
        clock=0,
        cluster=cluster,
        namespaces=scenario.namespaces,
        policy=scenario.policy,
        horizon=scenario.horizon,
        objects=tuple(scenario.objects),
    )
    state.placements = {obj.id: place_replicas(obj, cluster) for obj in state.objects}
    state.capacity.record(0, capacity(cluster))
    for pod in scenario.trace.pods:
        state.push(Event(pod.arrival, EventKind.POD_ARRIVAL, pod.id))
    for fault in scenario.faults:
        state.push(fault)
    return state


def run(scenario):
    """
    Simulate a scenario up to its horizon.

    Args:
        scenario (Scenario): Validated scenario (see utils.scenario)

    Returns:
        tuple: (SimState, RunReport)
    """
    state = init_state(scenario)
    pods = {pod.id: pod for pod in scenario.trace.pods}
    logger.info("Run %s started: policy %s", scenario.name, scenario.policy.to_dict())
    _sample(state, 0)
    while state.events and state.events[0].time <= scenario.horizon:
        event = heapq.heappop(state.events)
        step(state, event, pods)
        if not state.events or state.events[0].time != event.time:
            if state.utilization_series and state.utilization_series[-1][0] == event.time:
                state.utilization_series.pop()
                state.pending_series.pop()
                if state.objects:
                    state.availability_series.pop()
            _sample(state, event.time)
    state.clock = max(state.clock, scenario.horizon)
    state.ledger.clock = scenario.horizon
    report = build_report(scenario, state)
    logger.info("Run %s finished: utilization %.4f, %d preemptions", scenario.name,
                report.gpu_utilization, report.preemptions)
    return state, report


def build_report(scenario, state: SimState):
    window = (0, scenario.horizon)
    gpu_seconds = aggregate_seconds(state.ledger, None, window, Resource.GPU)
    unavailable = [count for _, count in state.availability_series]
    incidents = sum(1 for prev, cur in zip([0] + unavailable, unavailable) if cur > 0 and prev == 0)
    return RunReport(
        scenario=scenario.name,
        policy=scenario.policy.to_dict(),
        horizon=scenario.horizon,
        gpu_utilization=utilization(state.ledger, state.capacity, window, Resource.GPU),
        cpu_utilization=utilization(state.ledger, state.capacity, window, Resource.CPU),
        gpu_hours=aggregate(state.ledger, None, window, Resource.GPU),
        cpu_hours=aggregate(state.ledger, None, window, Resource.CPU),
        gpu_seconds=gpu_seconds,
        preemptions=state.preemptions,
        interruptions=state.interruptions,
        replicas_added=state.replicas_added,
        max_unavailable_objects=max(unavailable, default=0),
        availability_incidents=incidents,
        counts=state.counts(),
        namespace_usage=namespace_rollup(state.ledger, window, scenario.namespaces),
        utilization_series=list(state.utilization_series),
        pending_series=list(state.pending_series),
        availability_series=list(state.availability_series),
    )


def new_segment_cache(scenario, store=None):
    """Segment cache scoped to this scenario's content and policy."""
    scope = f"{scenario.fingerprint}:{scenario.policy.to_dict()}"
    return SegmentCache(scope, store)
