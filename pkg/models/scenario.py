"""
Document schemas for scenario, inventory and trace files.

These models check shape and value ranges only. Cross references
(duplicate ids, dangling regions/locations/models/namespaces) are checked
by the loaders in utils/, which know the whole document.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RegionDoc(_Doc):
    id: str = Field(min_length=1)


class LocationDoc(_Doc):
    id: str = Field(min_length=1)
    region: str
    status: Literal["up", "down"] = "up"


class GpuModelDoc(_Doc):
    id: str = Field(min_length=1)
    reserved: bool = False


class NodeGpuDoc(_Doc):
    model: str
    count: int = Field(gt=0)


class NodeDoc(_Doc):
    id: str = Field(min_length=1)
    location: str
    cpu_capacity: int = Field(gt=0)
    mem_capacity: int = Field(gt=0)
    gpus: List[NodeGpuDoc] = []
    lifecycle: Literal["hardware-managed", "os-managed", "peered"] = "hardware-managed"


class InventoryDoc(_Doc):
    regions: List[RegionDoc] = Field(min_length=1)
    locations: List[LocationDoc] = []
    gpu_models: List[GpuModelDoc] = []
    nodes: List[NodeDoc] = []


class QuotaDoc(_Doc):
    cpu: Optional[int] = Field(default=None, ge=0)
    mem: Optional[int] = Field(default=None, ge=0)
    gpu: Optional[int] = Field(default=None, ge=0)


class NamespaceDoc(_Doc):
    id: str = Field(min_length=1)
    quota: Optional[QuotaDoc] = None
    share_weight: float = Field(default=1.0, gt=0)
    grants: List[str] = []


class PodDoc(_Doc):
    id: str = Field(min_length=1)
    namespace: str
    cpu: int = Field(default=0, ge=0)
    mem: int = Field(default=0, ge=0)
    gpu_count: int = Field(default=0, ge=0)
    acceptable_models: List[str] = []
    region_affinity: Optional[str] = None
    priority: Literal["guaranteed", "opportunistic"] = "guaranteed"
    duration: int = Field(gt=0)
    arrival: int = Field(ge=0)


class ModelPreferenceDoc(_Doc):
    models: List[str] = []
    weight: float = Field(gt=0)


class GeneratorParamsDoc(_Doc):
    """
    Synthetic workload parameters.

    Arrivals are a Poisson process with the given rate (pods per second);
    durations are log-uniform in [duration_min, duration_max] seconds.
    """
    namespaces: List[str]
    pod_count: int = Field(ge=0)
    arrival_rate: float
    duration_min: int = Field(gt=0)
    duration_max: int = Field(gt=0)
    opportunistic_fraction: float = Field(default=0.0, ge=0, le=1)
    opportunistic_namespace: Optional[str] = None
    gpu_request_weights: Dict[int, float] = {1: 1.0}
    model_preferences: List[ModelPreferenceDoc] = []
    cpu_range: List[int] = [1000, 4000]
    mem_range: List[int] = [4 * 2**30, 16 * 2**30]
    region_affinity_fraction: float = Field(default=0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.duration_max < self.duration_min:
            raise ValueError("duration_max must be >= duration_min")
        for name in ("cpu_range", "mem_range"):
            bounds = getattr(self, name)
            if len(bounds) != 2 or bounds[0] < 0 or bounds[1] < bounds[0]:
                raise ValueError(f"{name} must be [low, high] with 0 <= low <= high")
        if any(k < 0 or w < 0 for k, w in self.gpu_request_weights.items()):
            raise ValueError("gpu_request_weights must be nonnegative")
        if self.gpu_request_weights and sum(self.gpu_request_weights.values()) <= 0:
            raise ValueError("gpu_request_weights must not sum to zero")
        return self


class WorkloadDoc(_Doc):
    trace: Optional[List[PodDoc]] = None
    trace_file: Optional[str] = None
    generator: Optional[GeneratorParamsDoc] = None
    seed: int = 0

    @model_validator(mode="after")
    def _one_source(self):
        sources = [s for s in (self.trace, self.trace_file, self.generator) if s is not None]
        if len(sources) > 1:
            raise ValueError("workload takes exactly one of trace, trace_file, generator")
        return self


class PolicyDoc(_Doc):
    ordering: Literal["fifo", "fair-share"] = "fifo"
    quotas_enabled: bool = False
    reservations_enabled: bool = False
    backfill_enabled: bool = False
    fair_share_halflife: int = Field(default=86400, gt=0)


class FaultDoc(_Doc):
    time: int = Field(ge=0)
    location: str
    action: Literal["outage", "recovery"]


class StorageObjectDoc(_Doc):
    id: str = Field(min_length=1)
    region: str
    replication_factor: Optional[int] = Field(default=None, ge=1)


class StorageDoc(_Doc):
    replication_factor: int = Field(default=3, ge=1)
    objects: List[StorageObjectDoc] = []
    object_counts: Dict[str, int] = {}


class ScenarioDoc(_Doc):
    name: Optional[str] = None
    inventory: InventoryDoc
    namespaces: List[NamespaceDoc] = []
    workload: WorkloadDoc = WorkloadDoc()
    policy: PolicyDoc = PolicyDoc()
    faults: List[FaultDoc] = []
    storage: StorageDoc = StorageDoc()
    horizon_seconds: int = Field(gt=0)
    accounting_segment_seconds: int = Field(default=3600, gt=0)
    report_period_seconds: int = Field(default=86400, gt=0)
    variants: List[str] = []
