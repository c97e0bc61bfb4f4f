"""
Scenario loading for the stretched-cluster simulator.
Turns one scenario JSON document into a validated Scenario: inventory,
namespaces, workload trace, policy, fault schedule, storage objects and
horizon. Every problem found is reported with a stable code and the line
it sits on.
"""
import copy
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import ValidationError

from models.entities import (
    Event, EventKind, Namespace, Ordering, PolicyConfig, StorageObject,
)
from models.scenario import ScenarioDoc
from utils.cluster import Cluster, load_inventory
from utils.diagnostics import LineIndex, anchor, from_validation_error, parse_json
from utils.errors import Diagnostic, DiagnosticCollector, ScenarioError
from utils.storage import synthesize_objects
from utils.workload import WorkloadTrace, generate_workload, load_namespaces, load_trace

logger = logging.getLogger(__name__)

POLICY_KEYS = ("ordering", "quotas_enabled", "reservations_enabled", "backfill_enabled",
               "fair_share_halflife")

# Flags a variant name may combine with "+".
VARIANT_FLAGS = {
    "fifo": {},
    "fair-share": {"ordering": Ordering.FAIR_SHARE},
    "quota": {"quotas_enabled": True},
    "quotas": {"quotas_enabled": True},
    "reservation": {"reservations_enabled": True},
    "reservations": {"reservations_enabled": True},
    "backfill": {"backfill_enabled": True},
}

VARIANT_PRESETS = {
    "reservation-backfill": "reservation+backfill",
    "full": "fair-share+quota+reservation+backfill",
}


@dataclass
class Scenario:
    """A validated, ready-to-run scenario."""
    name: str
    document: dict
    cluster: Cluster
    namespaces: Dict[str, Namespace]
    trace: WorkloadTrace
    policy: PolicyConfig
    faults: Tuple[Event, ...]
    objects: Tuple[StorageObject, ...]
    horizon: int
    segment_seconds: int
    report_period: int
    variants: Tuple[str, ...]
    seed: int
    fingerprint: str

    def with_policy(self, policy: PolicyConfig):
        return replace(self, policy=policy)


def parse_variant(name, base: Optional[PolicyConfig] = None):
    """
    Resolve a variant name to a PolicyConfig.

    A variant is a preset name or flags joined with "+", e.g.
    "fifo+backfill+reservation". Flags start from the FIFO baseline.

    Raises:
        ScenarioError: unknown-policy-flag
    """
    base = base or PolicyConfig()
    flags = VARIANT_PRESETS.get(name, name)
    settings = {}
    for token in flags.split("+"):
        token = token.strip()
        if token not in VARIANT_FLAGS:
            raise ScenarioError.single("unknown-policy-flag",
                                       f"unknown policy flag '{token}' in variant '{name}'")
        settings.update(VARIANT_FLAGS[token])
    return PolicyConfig(fair_share_halflife=base.fair_share_halflife, **settings)


def _coerce_flag(key, raw):
    if key == "ordering":
        return raw
    if key == "fair_share_halflife":
        try:
            return int(raw)
        except ValueError:
            return raw
    lowered = str(raw).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    return raw


def apply_overrides(document, seed=None, policy_overrides=()):
    """
    Apply CLI overrides to a parsed scenario document (returns a copy).

    Raises:
        ScenarioError: unknown-policy-flag for an override key that is
            not a policy field
    """
    document = copy.deepcopy(document)
    if not isinstance(document, dict):
        return document
    if seed is not None:
        document.setdefault("workload", {})["seed"] = int(seed)
    found = DiagnosticCollector()
    for key, value in policy_overrides:
        if key not in POLICY_KEYS:
            found.add("unknown-policy-flag", f"unknown policy flag '{key}'", ("policy",))
            continue
        document.setdefault("policy", {})[key] = _coerce_flag(key, value)
    found.raise_if_any()
    return document


def _fingerprint(document):
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _load_workload(doc, raw_workload, cluster, namespaces, base_dir, found):
    workload = doc.workload
    if workload.trace is not None:
        return load_trace(raw_workload["trace"], cluster, namespaces, ("workload", "trace"))
    if workload.trace_file is not None:
        path = Path(base_dir or ".") / workload.trace_file
        try:
            text = path.read_text()
        except OSError as e:
            found.add("parse-error", f"cannot read trace file '{path}': {e}", ("workload", "trace_file"))
            return WorkloadTrace(())
        documents, index = parse_json(text)
        try:
            return load_trace(documents, cluster, namespaces, ())
        except ScenarioError as e:
            # Anchor to the trace file's own lines.
            raise ScenarioError([Diagnostic(d.code, f"{path.name}: {d.message}", d.path, d.line)
                                 for d in anchor(e.diagnostics, index)])
    if workload.generator is not None:
        params = workload.generator
        prefix = ("workload", "generator")
        for i, ns in enumerate(params.namespaces):
            if ns not in namespaces:
                found.add("unknown-namespace", f"generator uses unknown namespace '{ns}'",
                          prefix + ("namespaces", i))
        if params.opportunistic_namespace and params.opportunistic_namespace not in namespaces:
            found.add("unknown-namespace",
                      f"unknown opportunistic namespace '{params.opportunistic_namespace}'",
                      prefix + ("opportunistic_namespace",))
        for i, pref in enumerate(params.model_preferences):
            for j, model in enumerate(pref.models):
                if model not in cluster.gpu_models:
                    found.add("unknown-model", f"generator prefers unknown model '{model}'",
                              prefix + ("model_preferences", i, "models", j))
        if found:
            return WorkloadTrace(())
        return generate_workload(params, workload.seed, cluster)
    return WorkloadTrace((), workload.seed)


def _load_faults(doc, cluster, found):
    events = []
    for i, fault in enumerate(doc.faults):
        if fault.location not in cluster.locations:
            found.add("unknown-location", f"fault references unknown location '{fault.location}'",
                      ("faults", i, "location"))
            continue
        kind = EventKind.LOCATION_OUTAGE if fault.action == "outage" else EventKind.LOCATION_RECOVERY
        events.append(Event(fault.time, kind, fault.location))
    return tuple(sorted(events))


def _load_storage(doc, cluster, found):
    storage = doc.storage
    objects: List[StorageObject] = []
    seen = set()
    for i, obj in enumerate(storage.objects):
        if obj.region not in cluster.regions:
            found.add("unknown-region", f"object '{obj.id}' references unknown region '{obj.region}'",
                      ("storage", "objects", i, "region"))
            continue
        if obj.id in seen:
            found.add("duplicate-id", f"duplicate object id '{obj.id}'", ("storage", "objects", i, "id"))
            continue
        seen.add(obj.id)
        objects.append(StorageObject(obj.id, obj.region,
                                     obj.replication_factor or storage.replication_factor))
    for region, count in storage.object_counts.items():
        if region not in cluster.regions:
            found.add("unknown-region", f"object_counts references unknown region '{region}'",
                      ("storage", "object_counts", region))
        elif count < 0:
            found.add("schema-error", f"object count for '{region}' must be >= 0",
                      ("storage", "object_counts", region))
    if not found:
        for obj in synthesize_objects(storage.object_counts, storage.replication_factor):
            if obj.id in seen:
                found.add("duplicate-id", f"duplicate object id '{obj.id}'", ("storage",))
                continue
            objects.append(obj)
    for region in sorted({o.region for o in objects}):
        if not cluster.locations_in(region, up_only=True):
            found.add("region-unavailable", f"region '{region}' holds objects but has no up location",
                      ("storage",))
    return tuple(objects)


def build_scenario(document, index: Optional[LineIndex] = None, base_dir=None, name=None):
    """
    Validate a parsed scenario document and build the Scenario.

    Raises:
        ScenarioError: every finding, anchored to lines when an index is given
    """
    try:
        try:
            doc = ScenarioDoc.model_validate(document)
        except ValidationError as e:
            raise ScenarioError(from_validation_error(e))

        found = DiagnosticCollector()
        cluster = load_inventory(document["inventory"], prefix=("inventory",))
        try:
            namespaces = load_namespaces(document.get("namespaces", []), cluster)
        except ScenarioError as e:
            found.extend(e.diagnostics)
            namespaces = {}
        trace = WorkloadTrace(())
        if not found:
            try:
                trace = _load_workload(doc, document.get("workload", {}), cluster, namespaces,
                                       base_dir, found)
            except ScenarioError as e:
                found.extend(e.diagnostics)
        faults = _load_faults(doc, cluster, found)
        objects = _load_storage(doc, cluster, found)
        policy = PolicyConfig(
            ordering=Ordering(doc.policy.ordering),
            quotas_enabled=doc.policy.quotas_enabled,
            reservations_enabled=doc.policy.reservations_enabled,
            backfill_enabled=doc.policy.backfill_enabled,
            fair_share_halflife=doc.policy.fair_share_halflife,
        )
        for i, variant in enumerate(doc.variants):
            try:
                parse_variant(variant, policy)
            except ScenarioError as e:
                found.extend([replace(d, path=("variants", i)) for d in e.diagnostics])
        found.raise_if_any()
    except ScenarioError as e:
        raise ScenarioError(anchor(e.diagnostics, index))

    scenario = Scenario(
        name=doc.name or name or "scenario",
        document=document,
        cluster=cluster,
        namespaces=namespaces,
        trace=trace,
        policy=policy,
        faults=faults,
        objects=objects,
        horizon=doc.horizon_seconds,
        segment_seconds=doc.accounting_segment_seconds,
        report_period=doc.report_period_seconds,
        variants=tuple(doc.variants),
        seed=doc.workload.seed,
        fingerprint=_fingerprint(document),
    )
    logger.info("Scenario %s: %d pods, %d faults, %d objects, horizon %ds",
                scenario.name, len(trace), len(faults), len(objects), scenario.horizon)
    return scenario


def load_scenario_text(text, base_dir=None, name=None, seed=None, policy_overrides=()):
    document, index = parse_json(text)
    try:
        document = apply_overrides(document, seed, policy_overrides)
    except ScenarioError as e:
        raise ScenarioError(anchor(e.diagnostics, index))
    if not isinstance(document, dict):
        raise ScenarioError([Diagnostic("schema-error", "scenario must be a JSON object", (), 1)])
    return build_scenario(document, index, base_dir, name)


def load_scenario(path, seed=None, policy_overrides=()):
    """
    Read and validate a scenario file.

    Args:
        path (str | Path): Scenario JSON file
        seed (int): Overrides workload.seed
        policy_overrides (iterable): (key, value) pairs applied to policy

    Returns:
        Scenario: Validated scenario

    Raises:
        ScenarioError: parse or validation failures
        OSError: the file cannot be read
    """
    path = Path(path)
    return load_scenario_text(path.read_text(), path.parent, path.stem, seed, policy_overrides)
