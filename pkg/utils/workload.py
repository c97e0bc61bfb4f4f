"""
Workload module for the stretched-cluster simulator.
Tenancy (namespaces with quotas, share weights and grants), pod traces,
structural pod validation and the seeded synthetic trace generator.
"""
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from models.entities import Namespace, PodSpec, Priority, Quota
from models.scenario import GeneratorParamsDoc, NamespaceDoc, PodDoc
from utils.diagnostics import from_validation_error
from utils.errors import DiagnosticCollector, ScenarioError

logger = logging.getLogger(__name__)


class RejectionReason(str, Enum):
    UNKNOWN_NAMESPACE = "unknown-namespace"
    UNKNOWN_MODEL = "unknown-model"
    UNKNOWN_REGION = "unknown-region"
    NEVER_FITS = "never-fits"


@dataclass(frozen=True)
class WorkloadTrace:
    """Pods sorted by arrival; seed is set when the trace was generated."""
    pods: Tuple[PodSpec, ...]
    seed: Optional[int] = None

    def __len__(self):
        return len(self.pods)

    def to_json(self):
        """Serialize deterministically (same trace, same bytes)."""
        return json.dumps([p.to_dict() for p in self.pods], sort_keys=True, indent=1)


def load_namespaces(documents, cluster=None, prefix=("namespaces",)):
    """
    Build the namespace table.

    Args:
        documents (list): Namespace documents
        cluster (Cluster): If given, grants must name models it knows
        prefix (tuple): Document path for diagnostics

    Returns:
        dict: namespace id -> Namespace
    """
    found = DiagnosticCollector()
    table: Dict[str, Namespace] = {}
    for i, raw in enumerate(documents):
        try:
            doc = NamespaceDoc.model_validate(raw)
        except ValidationError as e:
            found.extend(from_validation_error(e, tuple(prefix) + (i,)))
            continue
        if doc.id in table:
            found.add("duplicate-id", f"duplicate namespace id '{doc.id}'", tuple(prefix) + (i, "id"))
            continue
        if cluster is not None:
            for j, model in enumerate(doc.grants):
                if model not in cluster.gpu_models:
                    found.add("unknown-model", f"namespace '{doc.id}' grants unknown model '{model}'",
                              tuple(prefix) + (i, "grants", j))
        quota = Quota(doc.quota.cpu, doc.quota.mem, doc.quota.gpu) if doc.quota else None
        table[doc.id] = Namespace(doc.id, quota, doc.share_weight, frozenset(doc.grants))
    found.raise_if_any()
    return table


def pod_from_doc(doc: PodDoc):
    return PodSpec(
        id=doc.id,
        namespace=doc.namespace,
        cpu=doc.cpu,
        mem=doc.mem,
        gpu_count=doc.gpu_count,
        acceptable_models=tuple(doc.acceptable_models),
        region_affinity=doc.region_affinity,
        priority=Priority(doc.priority),
        duration=doc.duration,
        arrival=doc.arrival,
    )


def fits_structurally(pod: PodSpec, node, cluster):
    """Could the pod run on this node if the node were empty?"""
    if pod.region_affinity and cluster.region_of(node.id) != pod.region_affinity:
        return False
    if pod.cpu > node.cpu_capacity or pod.mem > node.mem_capacity:
        return False
    if pod.gpu_count == 0:
        return True
    return any(count >= pod.gpu_count for model, count in node.gpus
               if not pod.acceptable_models or model in pod.acceptable_models)


def validate_pod(pod: PodSpec, cluster, namespaces):
    """
    Check a pod against the cluster and namespace table.

    Args:
        pod (PodSpec): Pod to check
        cluster (Cluster): Inventory, treated as empty
        namespaces (dict): namespace id -> Namespace

    Returns:
        RejectionReason: Why the pod can never run, or None if it is ok
    """
    if pod.namespace not in namespaces:
        return RejectionReason.UNKNOWN_NAMESPACE
    if any(model not in cluster.gpu_models for model in pod.acceptable_models):
        return RejectionReason.UNKNOWN_MODEL
    if pod.region_affinity is not None and pod.region_affinity not in cluster.regions:
        return RejectionReason.UNKNOWN_REGION
    if not any(fits_structurally(pod, node, cluster) for node in cluster.nodes.values()):
        return RejectionReason.NEVER_FITS
    return None


def load_trace(documents, cluster=None, namespaces=None, prefix=("workload", "trace")):
    """
    Build a WorkloadTrace from a list of pod documents.

    Pods are ordered by (arrival, id). When a cluster and namespace table
    are given every pod must also pass validate_pod.
    """
    found = DiagnosticCollector()
    pods = []
    seen = set()
    for i, raw in enumerate(documents):
        path = tuple(prefix) + (i,)
        try:
            pod = pod_from_doc(PodDoc.model_validate(raw))
        except ValidationError as e:
            found.extend(from_validation_error(e, path))
            continue
        if pod.id in seen:
            found.add("duplicate-id", f"duplicate pod id '{pod.id}'", path + ("id",))
            continue
        seen.add(pod.id)
        if cluster is not None and namespaces is not None:
            reason = validate_pod(pod, cluster, namespaces)
            if reason is not None:
                found.add(reason.value, f"pod '{pod.id}' rejected: {reason.value}", path)
                continue
        pods.append(pod)
    found.raise_if_any()
    pods.sort(key=lambda p: (p.arrival, p.id))
    return WorkloadTrace(tuple(pods))


def _structural_limits(cluster, models, region):
    """Largest GPU count any node offers for these models (in region)."""
    best = 0
    for node in cluster.nodes.values():
        if region and cluster.region_of(node.id) != region:
            continue
        for model, count in node.gpus:
            if not models or model in models:
                best = max(best, count)
    return best


def generate_workload(params, seed, cluster=None):
    """
    Generate a synthetic pod trace.

    Inter-arrival times are exponential, durations log-uniform between the
    configured bounds, priorities Bernoulli with the opportunistic fraction.
    Every draw happens in a fixed order so identical (params, seed) give
    identical traces.

    Args:
        params (GeneratorParamsDoc | dict): Generator parameters
        seed (int): Seed for the random generator
        cluster (Cluster): If given, requests are clipped so every pod
            passes validate_pod against it

    Returns:
        WorkloadTrace: Trace with nondecreasing integer arrivals

    Raises:
        ScenarioError: invalid-generator for a negative rate or no namespaces
    """
    if not isinstance(params, GeneratorParamsDoc):
        try:
            params = GeneratorParamsDoc.model_validate(params)
        except ValidationError as e:
            raise ScenarioError(from_validation_error(e, ("workload", "generator")))
    if params.arrival_rate < 0 or math.isnan(params.arrival_rate):
        raise ScenarioError.single("invalid-generator", "arrival_rate must be >= 0",
                                   ("workload", "generator", "arrival_rate"))
    if not params.namespaces:
        raise ScenarioError.single("invalid-generator", "generator needs at least one namespace",
                                   ("workload", "generator", "namespaces"))
    if params.arrival_rate == 0 or params.pod_count == 0:
        return WorkloadTrace((), seed)

    rng = np.random.default_rng(seed)
    namespaces = list(params.namespaces)
    gpu_choices = sorted(params.gpu_request_weights)
    gpu_probs = np.array([params.gpu_request_weights[k] for k in gpu_choices], dtype=float)
    gpu_probs /= gpu_probs.sum()
    preferences = [tuple(p.models) for p in params.model_preferences] or [()]
    pref_probs = np.array([p.weight for p in params.model_preferences] or [1.0], dtype=float)
    pref_probs /= pref_probs.sum()
    regions = sorted(cluster.regions) if cluster is not None else []
    log_lo, log_hi = math.log(params.duration_min), math.log(params.duration_max)
    if cluster is not None and cluster.nodes:
        cpu_cap = min(n.cpu_capacity for n in cluster.nodes.values())
        mem_cap = min(n.mem_capacity for n in cluster.nodes.values())
    else:
        cpu_cap = mem_cap = None

    pods = []
    clock = 0.0
    for i in range(params.pod_count):
        clock += rng.exponential(1.0 / params.arrival_rate)
        opportunistic = rng.random() < params.opportunistic_fraction
        namespace = namespaces[int(rng.integers(len(namespaces)))]
        gpu_count = int(gpu_choices[int(rng.choice(len(gpu_choices), p=gpu_probs))])
        models = preferences[int(rng.choice(len(preferences), p=pref_probs))]
        region_draw = rng.random()
        region_pick = int(rng.integers(len(regions))) if regions else 0
        cpu = int(rng.integers(params.cpu_range[0], params.cpu_range[1] + 1))
        mem = int(rng.integers(params.mem_range[0], params.mem_range[1] + 1))
        duration = int(round(math.exp(rng.uniform(log_lo, log_hi))))
        duration = min(max(duration, params.duration_min), params.duration_max)

        if opportunistic and params.opportunistic_namespace:
            namespace = params.opportunistic_namespace
        region = regions[region_pick] if regions and region_draw < params.region_affinity_fraction else None
        if cluster is not None:
            cpu = min(cpu, cpu_cap) if cpu_cap is not None else cpu
            mem = min(mem, mem_cap) if mem_cap is not None else mem
            if region and not any(cluster.region_of(n) == region for n in cluster.nodes):
                region = None
            if gpu_count and region and _structural_limits(cluster, models, region) == 0:
                region = None
            if gpu_count:
                limit = _structural_limits(cluster, models, region)
                if limit == 0:
                    models = ()
                    limit = _structural_limits(cluster, models, region)
                gpu_count = min(gpu_count, limit)

        pods.append(PodSpec(
            id=f"pod-{i:06d}",
            namespace=namespace,
            cpu=cpu,
            mem=mem,
            gpu_count=gpu_count,
            acceptable_models=models,
            region_affinity=region,
            priority=Priority.OPPORTUNISTIC if opportunistic else Priority.GUARANTEED,
            duration=duration,
            arrival=int(clock),
        ))
    logger.info("Generated %d pods with seed %s", len(pods), seed)
    return WorkloadTrace(tuple(pods), seed)
