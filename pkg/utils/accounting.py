"""
Accounting module for the stretched-cluster simulator.

Usage ledger, GPU/CPU-hour aggregation per namespace, utilization against
a time-varying capacity, and the segmented query cache.

All sums are carried in integer resource-seconds (GPU-seconds or
millicore-seconds) and converted to hours once at the end, which keeps
segmented and direct aggregation bit-equal.
"""
import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import pandas as pd

from models.entities import Priority, Resource, UsageRecord
from utils.errors import InvalidWindowError

logger = logging.getLogger(__name__)

ALL_NAMESPACES = "*"

# Seconds per resource-hour for each resource's unit (GPUs, millicores).
HOUR_DIVISOR = {Resource.GPU: 3600, Resource.CPU: 3600 * 1000}

LEDGER_COLUMNS = ["namespace", "resource", "amount", "start", "end"]


def _check_window(window):
    t0, t1 = window
    if not float(t0).is_integer() or not float(t1).is_integer():
        raise InvalidWindowError(f"window bounds must be whole seconds, got {window}")
    if t1 <= t0:
        raise InvalidWindowError(f"inverted or empty window [{t0}, {t1})")
    return int(t0), int(t1)


class UsageLedger:
    """
    Append-only list of usage records.

    The engine opens records when a pod starts and closes them when it
    completes, fails or is evicted. Open records are clipped at clock.
    """

    def __init__(self):
        self.records: List[UsageRecord] = []
        self.clock = 0
        self._open: Dict[str, List[UsageRecord]] = {}

    def __len__(self):
        return len(self.records)

    def open(self, pod, start):
        """Open gpu and cpu records for a pod that starts running."""
        opened = []
        if pod.gpu_count > 0:
            opened.append(UsageRecord(pod.namespace, Resource.GPU, pod.gpu_count, start,
                                      None, pod.priority, pod.id))
        if pod.cpu > 0:
            opened.append(UsageRecord(pod.namespace, Resource.CPU, pod.cpu, start,
                                      None, pod.priority, pod.id))
        if opened:
            self.records.extend(opened)
            self._open[pod.id] = opened
        return opened

    def close(self, pod_id, end):
        """Close a pod's open records; zero-length records are dropped."""
        records = self._open.pop(pod_id, [])
        for record in records:
            record.end = end
        empty = [r for r in records if r.end <= r.start]
        if empty:
            self.records = [r for r in self.records if not (r.end is not None and r.end <= r.start)]
        return records

    def open_records(self):
        return [r for records in self._open.values() for r in records]

    def to_frame(self):
        frame = pd.DataFrame([r.to_dict() for r in self.records], columns=LEDGER_COLUMNS)
        # Open records have no end yet; keep the column integer-typed.
        frame["end"] = frame["end"].astype("Int64")
        return frame

    def export(self, path):
        """Write the ledger as CSV with header namespace,resource,amount,start,end."""
        self.to_frame().to_csv(path, index=False)


def _overlap(record, t0, t1, clock):
    end = clock if record.end is None else record.end
    return max(0, min(end, t1) - max(record.start, t0))


def aggregate_seconds(ledger: UsageLedger, namespace, window, resource=Resource.GPU):
    """
    Integer resource-seconds consumed inside a window.

    Args:
        ledger (UsageLedger): Ledger to read
        namespace (str): Namespace id, or None / "*" for all
        window (tuple): [t0, t1) in whole seconds
        resource (Resource): gpu or cpu

    Returns:
        int: sum of amount x overlap over matching records
    """
    t0, t1 = _check_window(window)
    resource = Resource(resource)
    everyone = namespace in (None, ALL_NAMESPACES)
    total = 0
    for record in ledger.records:
        if record.resource != resource or (not everyone and record.namespace != namespace):
            continue
        total += record.amount * _overlap(record, t0, t1, ledger.clock)
    return total


def to_hours(seconds, resource=Resource.GPU):
    return seconds / HOUR_DIVISOR[Resource(resource)]


def aggregate(ledger: UsageLedger, namespace, window, resource=Resource.GPU):
    """
    Resource-hours consumed inside a window (GPU-hours or core-hours).

    Raises:
        InvalidWindowError: t1 <= t0
    """
    return to_hours(aggregate_seconds(ledger, namespace, window, resource), resource)


class CapacityTimeline:
    """
    Step function of schedulable capacity over time.

    The engine records a point whenever a location changes status.
    """

    def __init__(self):
        self._points: List[Tuple[int, int, int]] = []  # (time, gpus, cpu millicores)

    def record(self, time, totals):
        point = (int(time), totals.gpu_total, totals.cpu)
        if self._points and self._points[-1][0] == point[0]:
            self._points[-1] = point
        elif not self._points or self._points[-1][1:] != point[1:]:
            self._points.append(point)

    @classmethod
    def constant(cls, totals):
        timeline = cls()
        timeline.record(0, totals)
        return timeline

    def at(self, time, resource=Resource.GPU):
        value = 0
        for t, gpus, cpu in self._points:
            if t > time:
                break
            value = gpus if Resource(resource) == Resource.GPU else cpu
        return value

    def integrate(self, window, resource=Resource.GPU):
        """Capacity resource-seconds over [t0, t1)."""
        t0, t1 = _check_window(window)
        column = 1 if Resource(resource) == Resource.GPU else 2
        total = 0
        for i, point in enumerate(self._points):
            start = point[0]
            end = self._points[i + 1][0] if i + 1 < len(self._points) else math.inf
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                total += point[column] * (hi - lo)
        return total

    def to_list(self):
        return list(self._points)


def utilization(ledger: UsageLedger, capacity, window, resource=Resource.GPU):
    """
    Allocated over capacity resource-seconds inside a window.

    Args:
        ledger (UsageLedger): Usage ledger
        capacity (CapacityTimeline | Cluster): Capacity over time; a
            Cluster is taken as constant at its current capacity
        window (tuple): [t0, t1)
        resource (Resource): gpu (default) or cpu

    Returns:
        float: fraction in [0, 1]; 0 when capacity-seconds is 0
    """
    if not isinstance(capacity, CapacityTimeline):
        from utils.cluster import capacity as cluster_capacity
        capacity = CapacityTimeline.constant(cluster_capacity(capacity))
    denominator = capacity.integrate(window, resource)
    if denominator == 0:
        return 0.0
    allocated = aggregate_seconds(ledger, None, window, resource)
    return min(1.0, allocated / denominator)


def decayed_usage(ledger: UsageLedger, now, halflife, resource=Resource.GPU):
    """
    Per-namespace usage with exponential decay.

    Each record contributes amount x integral of 2^(-(now - t)/halflife)
    over its lifetime up to now.

    Returns:
        dict: namespace id -> decayed resource-seconds
    """
    rate = math.log(2) / halflife
    usage: Dict[str, float] = {}
    for record in ledger.records:
        if record.resource != Resource(resource) or record.start >= now:
            continue
        end = now if record.end is None else min(record.end, now)
        weight = (math.exp(-rate * (now - end)) - math.exp(-rate * (now - record.start))) / rate
        usage[record.namespace] = usage.get(record.namespace, 0.0) + record.amount * weight
    return usage


@dataclass
class QueryResult:
    hours: float
    seconds: int
    hits: int = 0
    misses: int = 0
    direct: int = 0

    @property
    def hit_rate(self):
        looked_up = self.hits + self.misses
        return self.hits / looked_up if looked_up else 0.0


class SegmentCache:
    """
    Per-segment partial sums, keyed by (namespace, resource, width, index).

    Only segments that end strictly before the ledger clock are cached;
    those can no longer change, so entries are never recomputed. An
    optional store persists entries for warm restarts under a scope
    string naming the run.
    """

    def __init__(self, scope="default", store=None):
        self.scope = scope
        self.store = store
        self._entries: Dict[Tuple[str, str, int, int], int] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if store is not None:
            self._entries.update(store.load(scope))

    def __len__(self):
        return len(self._entries)

    def get(self, key):
        with self._lock:
            return self._entries.get(key)

    def put(self, key, seconds):
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = seconds
        if self.store is not None:
            self.store.save(self.scope, key, seconds)


def segmented_query(ledger: UsageLedger, cache: SegmentCache, namespace, window,
                    width=3600, resource=Resource.GPU):
    """
    Aggregate a window through the segment cache.

    The window splits into a ragged head, whole aligned segments of the
    given width, and a ragged tail. Closed aligned segments come from the
    cache (computed and stored on a miss); the edges and any segment still
    open at the ledger clock are computed directly. The result equals
    aggregate() on the same window exactly.

    Returns:
        QueryResult: hours, integer seconds and cache statistics

    Raises:
        InvalidWindowError: bad window or width <= 0
    """
    t0, t1 = _check_window(window)
    if width <= 0 or not float(width).is_integer():
        raise InvalidWindowError(f"segment width must be a positive whole number, got {width}")
    width = int(width)
    resource = Resource(resource)
    key_ns = ALL_NAMESPACES if namespace is None else namespace
    result = QueryResult(0.0, 0)

    first = -(-t0 // width)  # ceil
    last = t1 // width
    if first >= last:
        result.seconds = aggregate_seconds(ledger, namespace, (t0, t1), resource)
        result.direct = 1
    else:
        total = 0
        if t0 < first * width:
            total += aggregate_seconds(ledger, namespace, (t0, first * width), resource)
            result.direct += 1
        for k in range(first, last):
            seg = (k * width, (k + 1) * width)
            if seg[1] >= ledger.clock:
                total += aggregate_seconds(ledger, namespace, seg, resource)
                result.direct += 1
                continue
            key = (key_ns, resource.value, width, k)
            cached = cache.get(key)
            if cached is None:
                cached = aggregate_seconds(ledger, namespace, seg, resource)
                cache.put(key, cached)
                result.misses += 1
            else:
                result.hits += 1
            total += cached
        if last * width < t1:
            total += aggregate_seconds(ledger, namespace, (last * width, t1), resource)
            result.direct += 1
        result.seconds = total
    cache.hits += result.hits
    cache.misses += result.misses
    result.hours = to_hours(result.seconds, resource)
    return result


def namespace_rollup(ledger: UsageLedger, window, namespaces=None):
    """
    GPU-hours and CPU core-hours per namespace over a window.

    Returns:
        pd.DataFrame: columns namespace, gpu_hours, cpu_hours, sorted by namespace
    """
    names = set(namespaces or []) | {r.namespace for r in ledger.records}
    rows = [{
        "namespace": ns,
        "gpu_hours": aggregate(ledger, ns, window, Resource.GPU),
        "cpu_hours": aggregate(ledger, ns, window, Resource.CPU),
    } for ns in sorted(names)]
    return pd.DataFrame(rows, columns=["namespace", "gpu_hours", "cpu_hours"])


def priority_rollup(ledger: UsageLedger, window):
    """
    GPU-hours and CPU core-hours split by namespace and priority class.

    Returns:
        pd.DataFrame: columns namespace, priority, gpu_hours, cpu_hours
    """
    t0, t1 = _check_window(window)
    seconds: Dict[Tuple[str, str, Resource], int] = {}
    for record in ledger.records:
        key = (record.namespace, Priority(record.priority).value, record.resource)
        seconds[key] = seconds.get(key, 0) + record.amount * _overlap(record, t0, t1, ledger.clock)
    groups = sorted({(ns, prio) for ns, prio, _ in seconds})
    rows = [{
        "namespace": ns,
        "priority": prio,
        "gpu_hours": to_hours(seconds.get((ns, prio, Resource.GPU), 0), Resource.GPU),
        "cpu_hours": to_hours(seconds.get((ns, prio, Resource.CPU), 0), Resource.CPU),
    } for ns, prio in groups]
    return pd.DataFrame(rows, columns=["namespace", "priority", "gpu_hours", "cpu_hours"])


def periodic_rollup(ledger: UsageLedger, cache: SegmentCache, window, period,
                    resource=Resource.GPU):
    """
    Per-namespace usage bucketed by period, served through the segment cache.

    Returns:
        pd.DataFrame: columns period_start, namespace, <resource>_hours
    """
    t0, t1 = _check_window(window)
    column = f"{Resource(resource).value}_hours"
    names = sorted({r.namespace for r in ledger.records})
    rows = []
    start = t0
    while start < t1:
        end = min(start + period, t1)
        for ns in names:
            result = segmented_query(ledger, cache, ns, (start, end), period, resource)
            rows.append({"period_start": start, "namespace": ns, column: result.hours})
        start = end
    return pd.DataFrame(rows, columns=["period_start", "namespace", column])
