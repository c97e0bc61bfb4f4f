"""
Entity models for the stretched-cluster simulator.
Defines data structures for the inventory, tenants, workloads, schedule
decisions, storage objects and usage records tracked by the simulator.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional, Tuple


class LocationStatus(str, Enum):
    UP = "up"
    DOWN = "down"


class Lifecycle(str, Enum):
    """
    Administrative integration level of a node.

    Carried as metadata only; the scheduler treats all three the same.
    """
    HARDWARE_MANAGED = "hardware-managed"
    OS_MANAGED = "os-managed"
    PEERED = "peered"


class Priority(str, Enum):
    """
    Priority class of a pod.

    GUARANTEED    → may trigger preemption, is never preempted, counts
                    against namespace quota.
    OPPORTUNISTIC → backfill work, evicted when guaranteed work needs room,
                    ignores quota.
    """
    GUARANTEED = "guaranteed"
    OPPORTUNISTIC = "opportunistic"


class Resource(str, Enum):
    GPU = "gpu"
    CPU = "cpu"


class Ordering(str, Enum):
    FIFO = "fifo"
    FAIR_SHARE = "fair-share"


class EventKind(str, Enum):
    POD_COMPLETION = "pod-completion"
    LOCATION_RECOVERY = "location-recovery"
    POD_ARRIVAL = "pod-arrival"
    LOCATION_OUTAGE = "location-outage"
    SCHEDULING_TICK = "scheduling-tick"


# Capacity freed at time t must be visible to arrivals at t.
EVENT_KIND_PRIORITY = {
    EventKind.POD_COMPLETION: 0,
    EventKind.LOCATION_RECOVERY: 1,
    EventKind.POD_ARRIVAL: 2,
    EventKind.LOCATION_OUTAGE: 3,
    EventKind.SCHEDULING_TICK: 4,
}


@dataclass(frozen=True)
class Region:
    id: str

    def to_dict(self):
        return {"id": self.id}


@dataclass
class Location:
    id: str
    region: str
    status: LocationStatus = LocationStatus.UP

    @property
    def is_up(self):
        return self.status == LocationStatus.UP

    def to_dict(self):
        return {"id": self.id, "region": self.region, "status": self.status.value}


@dataclass(frozen=True)
class GpuModel:
    id: str
    reserved: bool = False

    def to_dict(self):
        return {"id": self.id, "reserved": self.reserved}


@dataclass(frozen=True)
class Node:
    """
    A schedulable resource bundle at a physical location.

    gpus keeps the (model, count) pairs in inventory order; that order is
    the model preference when a pod accepts any model.
    """
    id: str
    location: str
    cpu_capacity: int
    mem_capacity: int
    gpus: Tuple[Tuple[str, int], ...] = ()
    lifecycle: Lifecycle = Lifecycle.HARDWARE_MANAGED

    @property
    def gpu_capacity(self) -> Dict[str, int]:
        return dict(self.gpus)

    @property
    def gpu_total(self):
        return sum(count for _, count in self.gpus)

    def to_dict(self):
        return {
            "id": self.id,
            "location": self.location,
            "cpu_capacity": self.cpu_capacity,
            "mem_capacity": self.mem_capacity,
            "gpus": [{"model": m, "count": c} for m, c in self.gpus],
            "lifecycle": self.lifecycle.value,
        }


@dataclass
class ResourceTotals:
    """Summed cpu (millicores), memory (bytes) and per-model GPU counts."""
    cpu: int = 0
    mem: int = 0
    gpus: Dict[str, int] = field(default_factory=dict)

    @property
    def gpu_total(self):
        return sum(self.gpus.values())

    def add_node(self, node: Node):
        self.cpu += node.cpu_capacity
        self.mem += node.mem_capacity
        for model, count in node.gpus:
            self.gpus[model] = self.gpus.get(model, 0) + count

    def to_dict(self):
        return {
            "cpu": self.cpu,
            "mem": self.mem,
            "gpus": dict(sorted(self.gpus.items())),
            "gpu_total": self.gpu_total,
        }


@dataclass(frozen=True)
class Quota:
    """Concurrent consumption cap; a None field is unlimited."""
    cpu: Optional[int] = None
    mem: Optional[int] = None
    gpu: Optional[int] = None

    def to_dict(self):
        return {"cpu": self.cpu, "mem": self.mem, "gpu": self.gpu}


@dataclass(frozen=True)
class Namespace:
    id: str
    quota: Optional[Quota] = None
    share_weight: float = 1.0
    grants: FrozenSet[str] = frozenset()

    def to_dict(self):
        return {
            "id": self.id,
            "quota": self.quota.to_dict() if self.quota else None,
            "share_weight": self.share_weight,
            "grants": sorted(self.grants),
        }


@dataclass(frozen=True)
class PodSpec:
    """
    A tenant workload request.

    cpu is in millicores, mem in bytes, duration and arrival in whole
    seconds. An empty acceptable_models tuple means any model.
    """
    id: str
    namespace: str
    cpu: int
    mem: int
    gpu_count: int
    acceptable_models: Tuple[str, ...]
    region_affinity: Optional[str]
    priority: Priority
    duration: int
    arrival: int

    @property
    def is_guaranteed(self):
        return self.priority == Priority.GUARANTEED

    def to_dict(self):
        return {
            "id": self.id,
            "namespace": self.namespace,
            "cpu": self.cpu,
            "mem": self.mem,
            "gpu_count": self.gpu_count,
            "acceptable_models": list(self.acceptable_models),
            "region_affinity": self.region_affinity,
            "priority": self.priority.value,
            "duration": self.duration,
            "arrival": self.arrival,
        }


@dataclass(frozen=True)
class ScheduleDecision:
    pod_id: str
    node_id: str
    assigned_model: Optional[str]
    start: int
    preempted_victims: Tuple[str, ...] = ()

    def to_dict(self):
        return {
            "pod_id": self.pod_id,
            "node_id": self.node_id,
            "assigned_model": self.assigned_model,
            "start": self.start,
            "preempted_victims": list(self.preempted_victims),
        }


@dataclass(frozen=True)
class PolicyConfig:
    """Scheduler policy flags. The defaults are the plain FIFO baseline."""
    ordering: Ordering = Ordering.FIFO
    quotas_enabled: bool = False
    reservations_enabled: bool = False
    backfill_enabled: bool = False
    fair_share_halflife: int = 86400

    def to_dict(self):
        return {
            "ordering": self.ordering.value,
            "quotas_enabled": self.quotas_enabled,
            "reservations_enabled": self.reservations_enabled,
            "backfill_enabled": self.backfill_enabled,
            "fair_share_halflife": self.fair_share_halflife,
        }


@dataclass(frozen=True)
class StorageObject:
    id: str
    region: str
    replication_factor: int = 3

    def to_dict(self):
        return {"id": self.id, "region": self.region,
                "replication_factor": self.replication_factor}


@dataclass(frozen=True)
class ReplicaSet:
    """Locations holding copies of one object, in rendezvous rank order."""
    object_id: str
    locations: Tuple[str, ...]
    degraded: bool

    def to_dict(self):
        return {"object_id": self.object_id, "locations": list(self.locations),
                "degraded": self.degraded}


@dataclass(frozen=True)
class PlacementChange:
    """One replica added by re-replication."""
    object_id: str
    location: str

    def to_dict(self):
        return {"object_id": self.object_id, "location": self.location}


@dataclass
class UsageRecord:
    """
    Interval of resource consumption attributed to a namespace.

    amount is a GPU count for gpu records and millicores for cpu records.
    end is None while the pod is still running.
    """
    namespace: str
    resource: Resource
    amount: int
    start: int
    end: Optional[int] = None
    priority: Priority = Priority.GUARANTEED
    pod_id: Optional[str] = None

    @property
    def is_open(self):
        return self.end is None

    def to_dict(self):
        return {
            "namespace": self.namespace,
            "resource": self.resource.value,
            "amount": self.amount,
            "start": self.start,
            "end": self.end,
        }


@dataclass(frozen=True)
class Event:
    time: int
    kind: EventKind
    payload: str = ""
    attempt: int = 0

    def sort_key(self):
        return (self.time, EVENT_KIND_PRIORITY[self.kind], self.payload, self.attempt)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()


@dataclass(frozen=True)
class RunManifest:
    scenario_path: str
    output_dir: str = "out"
    seed: Optional[int] = None
    policy_overrides: Tuple[Tuple[str, str], ...] = ()

    def to_dict(self):
        return {
            "scenario_path": self.scenario_path,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "policy_overrides": dict(self.policy_overrides),
        }
