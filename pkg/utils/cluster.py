"""
Cluster inventory module for the stretched-cluster simulator.
Holds regions, locations and nodes, the per-node allocation ledger, and
capacity queries that respect location up/down status.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from pydantic import ValidationError

from models.entities import (
    GpuModel, Lifecycle, Location, LocationStatus, Node, PodSpec, Region,
    ResourceTotals,
)
from models.scenario import InventoryDoc
from utils.diagnostics import from_validation_error
from utils.errors import DiagnosticCollector, OvercommitError, ScenarioError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Binding:
    """A pod bound to a node, holding its resources."""
    pod: PodSpec
    node_id: str
    model: Optional[str]
    start: int


@dataclass
class NodeAllocation:
    cpu: int = 0
    mem: int = 0
    gpus: Dict[str, int] = field(default_factory=dict)
    pods: Dict[str, Binding] = field(default_factory=dict)

    @property
    def gpu_total(self):
        return sum(self.gpus.values())


class Cluster:
    """
    Inventory plus allocation ledger.

    The simulation engine is the only writer. Every bind checks that the
    node stays within capacity for every resource.
    """

    def __init__(self, regions, locations, gpu_models, nodes):
        self.regions: Dict[str, Region] = {r.id: r for r in regions}
        self.locations: Dict[str, Location] = {l.id: l for l in locations}
        self.gpu_models: Dict[str, GpuModel] = {m.id: m for m in gpu_models}
        self.nodes: Dict[str, Node] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.allocations: Dict[str, NodeAllocation] = {n: NodeAllocation() for n in self.nodes}
        self._pod_nodes: Dict[str, str] = {}

    def __repr__(self):
        return (f"<Cluster(regions={len(self.regions)}, locations={len(self.locations)}, "
                f"nodes={len(self.nodes)})>")

    # -- topology ----------------------------------------------------------

    def region_of(self, node_id):
        return self.locations[self.nodes[node_id].location].region

    def is_schedulable(self, node_id):
        return self.locations[self.nodes[node_id].location].is_up

    def nodes_at(self, location_id):
        return [n for n in self.nodes.values() if n.location == location_id]

    def locations_in(self, region_id, up_only=False):
        return sorted(l.id for l in self.locations.values()
                      if l.region == region_id and (l.is_up or not up_only))

    def is_reserved(self, model_id):
        model = self.gpu_models.get(model_id)
        return bool(model and model.reserved)

    # -- allocation ledger ------------------------------------------------

    def free(self, node_id):
        """Return (cpu, mem, {model: gpus}) still unallocated on a node."""
        node = self.nodes[node_id]
        alloc = self.allocations[node_id]
        gpus = {m: c - alloc.gpus.get(m, 0) for m, c in node.gpus}
        return node.cpu_capacity - alloc.cpu, node.mem_capacity - alloc.mem, gpus

    def binding(self, pod_id) -> Optional[Binding]:
        node_id = self._pod_nodes.get(pod_id)
        if node_id is None:
            return None
        return self.allocations[node_id].pods[pod_id]

    def bindings_on(self, node_id) -> List[Binding]:
        return [self.allocations[node_id].pods[p] for p in sorted(self.allocations[node_id].pods)]

    def bind(self, pod: PodSpec, node_id, model, start):
        """Bind a pod to a node, raising OvercommitError if it would not fit."""
        if pod.id in self._pod_nodes:
            raise OvercommitError(f"pod {pod.id} is already bound to {self._pod_nodes[pod.id]}")
        node = self.nodes[node_id]
        alloc = self.allocations[node_id]
        if alloc.cpu + pod.cpu > node.cpu_capacity or alloc.mem + pod.mem > node.mem_capacity:
            raise OvercommitError(f"pod {pod.id} overcommits cpu/mem on {node_id}")
        if pod.gpu_count:
            capacity = node.gpu_capacity.get(model, 0)
            if alloc.gpus.get(model, 0) + pod.gpu_count > capacity:
                raise OvercommitError(f"pod {pod.id} overcommits {model} on {node_id}")
            alloc.gpus[model] = alloc.gpus.get(model, 0) + pod.gpu_count
        else:
            model = None
        alloc.cpu += pod.cpu
        alloc.mem += pod.mem
        binding = Binding(pod, node_id, model, start)
        alloc.pods[pod.id] = binding
        self._pod_nodes[pod.id] = node_id
        return binding

    def unbind(self, pod_id) -> Binding:
        node_id = self._pod_nodes.pop(pod_id)
        alloc = self.allocations[node_id]
        binding = alloc.pods.pop(pod_id)
        alloc.cpu -= binding.pod.cpu
        alloc.mem -= binding.pod.mem
        if binding.model is not None:
            alloc.gpus[binding.model] -= binding.pod.gpu_count
            if not alloc.gpus[binding.model]:
                del alloc.gpus[binding.model]
        return binding

    def namespace_usage(self, namespace, priority=None):
        """Concurrent (cpu, mem, gpus) held by a namespace's bound pods."""
        cpu = mem = gpus = 0
        for pod_id, node_id in self._pod_nodes.items():
            pod = self.allocations[node_id].pods[pod_id].pod
            if pod.namespace != namespace or (priority is not None and pod.priority != priority):
                continue
            cpu += pod.cpu
            mem += pod.mem
            gpus += pod.gpu_count
        return cpu, mem, gpus

    def allocated_totals(self):
        """Resources held on schedulable nodes."""
        totals = ResourceTotals()
        for node_id, alloc in self.allocations.items():
            if not self.is_schedulable(node_id):
                continue
            totals.cpu += alloc.cpu
            totals.mem += alloc.mem
            for model, count in alloc.gpus.items():
                totals.gpus[model] = totals.gpus.get(model, 0) + count
        return totals

    def to_dict(self):
        """Convert cluster to dictionary representation"""
        return {
            "regions": [r.to_dict() for r in self.regions.values()],
            "locations": [l.to_dict() for l in self.locations.values()],
            "gpu_models": [m.to_dict() for m in self.gpu_models.values()],
            "nodes": [n.to_dict() for n in self.nodes.values()],
        }


def load_inventory(document, prefix=()):
    """
    Build a Cluster from an inventory document.

    Args:
        document (dict): Parsed JSON with regions, locations, gpu_models, nodes
        prefix (tuple): Path of the inventory inside a larger document,
            used to anchor diagnostics

    Returns:
        Cluster: Cluster satisfying every inventory invariant

    Raises:
        ScenarioError: Listing every duplicate, dangling reference and
            nonpositive capacity found
    """
    try:
        doc = InventoryDoc.model_validate(document)
    except ValidationError as e:
        raise ScenarioError(from_validation_error(e, prefix))

    found = DiagnosticCollector()
    prefix = tuple(prefix)

    def unique(items, kind):
        seen = set()
        for i, item in enumerate(items):
            if item.id in seen:
                found.add("duplicate-id", f"duplicate {kind} id '{item.id}'",
                          prefix + (kind + "s", i, "id"))
            seen.add(item.id)
        return seen

    region_ids = unique(doc.regions, "region")
    location_ids = unique(doc.locations, "location")
    unique(doc.nodes, "node")
    seen_models = set()
    for i, m in enumerate(doc.gpu_models):
        if m.id in seen_models:
            found.add("duplicate-id", f"duplicate gpu model id '{m.id}'",
                      prefix + ("gpu_models", i, "id"))
        seen_models.add(m.id)

    for i, loc in enumerate(doc.locations):
        if loc.region not in region_ids:
            found.add("unknown-region",
                      f"location '{loc.id}' references unknown region '{loc.region}'",
                      prefix + ("locations", i, "region"))

    models = {m.id: GpuModel(m.id, m.reserved) for m in doc.gpu_models}
    for i, node in enumerate(doc.nodes):
        if node.location not in location_ids:
            found.add("unknown-location",
                      f"node '{node.id}' references unknown location '{node.location}'",
                      prefix + ("nodes", i, "location"))
        seen_on_node = set()
        for j, gpu in enumerate(node.gpus):
            if gpu.model in seen_on_node:
                found.add("duplicate-id", f"node '{node.id}' lists model '{gpu.model}' twice",
                          prefix + ("nodes", i, "gpus", j, "model"))
            seen_on_node.add(gpu.model)
            # Models used by nodes but never declared are unreserved.
            models.setdefault(gpu.model, GpuModel(gpu.model, False))
    found.raise_if_any()

    cluster = Cluster(
        regions=[Region(r.id) for r in doc.regions],
        locations=[Location(l.id, l.region, LocationStatus(l.status)) for l in doc.locations],
        gpu_models=models.values(),
        nodes=[Node(n.id, n.location, n.cpu_capacity, n.mem_capacity,
                    tuple((g.model, g.count) for g in n.gpus), Lifecycle(n.lifecycle))
               for n in doc.nodes],
    )
    logger.info("Loaded inventory: %r", cluster)
    return cluster


def capacity(cluster: Cluster, region=None):
    """
    Sum capacity over nodes at up locations.

    Args:
        cluster (Cluster): Cluster to query
        region (str): Restrict to one region; None means the whole cluster

    Returns:
        ResourceTotals: cpu millicores, memory bytes and per-model GPUs

    Raises:
        ScenarioError: unknown-region
    """
    if region is not None and region not in cluster.regions:
        raise ScenarioError.single("unknown-region", f"unknown region '{region}'")
    totals = ResourceTotals()
    for node in cluster.nodes.values():
        location = cluster.locations[node.location]
        if not location.is_up:
            continue
        if region is not None and location.region != region:
            continue
        totals.add_node(node)
    return totals


def capacity_by_location(cluster: Cluster):
    """Per-location node count and capacity, for the site summary."""
    rows = []
    for loc_id in sorted(cluster.locations):
        location = cluster.locations[loc_id]
        totals = ResourceTotals()
        nodes = cluster.nodes_at(loc_id)
        for node in nodes:
            totals.add_node(node)
        rows.append({
            "location": loc_id,
            "region": location.region,
            "status": location.status.value,
            "nodes": len(nodes),
            "cpu": totals.cpu,
            "mem": totals.mem,
            "gpus": totals.gpu_total,
        })
    return rows


def set_location_status(cluster: Cluster, location, status):
    """
    Mark a location up or down.

    Failing the pods running there is the engine's job; this only flips
    the status, which removes or restores the location's nodes from
    scheduling and capacity.

    Returns:
        Cluster: The same cluster, updated in place
    """
    if location not in cluster.locations:
        raise ScenarioError.single("unknown-location", f"unknown location '{location}'")
    status = LocationStatus(status)
    current = cluster.locations[location]
    if current.status != status:
        current.status = status
        logger.info("Location %s is now %s", location, status.value)
    return cluster
