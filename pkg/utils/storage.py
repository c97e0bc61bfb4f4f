"""
Storage placement module for the stretched-cluster simulator.
Places object replicas on distinct physical locations inside a region with
rendezvous (highest random weight) hashing, audits availability under
outages and plans additive re-replication.
"""
import hashlib
import logging

import pandas as pd

from models.entities import PlacementChange, ReplicaSet, StorageObject
from utils.errors import RegionUnavailableError, ScenarioError

logger = logging.getLogger(__name__)

AVAILABLE = "available"
UNAVAILABLE = "unavailable"


def rendezvous_weight(object_id, location_id):
    """Deterministic 64-bit weight of a (object, location) pair."""
    digest = hashlib.sha256(f"{object_id}\x00{location_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def rendezvous_order(object_id, location_ids):
    """Locations ranked by descending weight, ties by location id."""
    return sorted(location_ids, key=lambda loc: (-rendezvous_weight(object_id, loc), loc))


def synthesize_objects(counts, replication_factor=3):
    """
    Create storage objects from per-region counts.

    Args:
        counts (dict): region id -> number of objects
        replication_factor (int): r for every object

    Returns:
        list: StorageObject list, ids "<region>-obj-00000" onwards
    """
    objects = []
    for region in sorted(counts):
        for i in range(counts[region]):
            objects.append(StorageObject(f"{region}-obj-{i:05d}", region, replication_factor))
    return objects


def place_replicas(obj: StorageObject, cluster):
    """
    Choose the locations that hold an object's replicas.

    Takes the top-r up locations of the object's region by rendezvous
    weight. With fewer than r up locations every one of them is used and
    the set is marked degraded.

    Raises:
        ScenarioError: unknown-region
        RegionUnavailableError: the region has no up location
    """
    if obj.region not in cluster.regions:
        raise ScenarioError.single("unknown-region", f"object '{obj.id}' references unknown region '{obj.region}'")
    up = cluster.locations_in(obj.region, up_only=True)
    if not up:
        raise RegionUnavailableError(f"region '{obj.region}' has no up location for '{obj.id}'")
    chosen = tuple(rendezvous_order(obj.id, up)[:obj.replication_factor])
    degraded = len(chosen) < obj.replication_factor
    if degraded:
        logger.warning("Object %s placed degraded on %d of %d locations",
                       obj.id, len(chosen), obj.replication_factor)
    return ReplicaSet(obj.id, chosen, degraded)


def availability(obj: StorageObject, replicas: ReplicaSet, cluster):
    """Available iff at least one replica location is up."""
    for location in replicas.locations:
        if cluster.locations[location].is_up:
            return AVAILABLE
    return UNAVAILABLE


def count_unavailable(objects, placements, cluster):
    return sum(1 for obj in objects
               if availability(obj, placements[obj.id], cluster) == UNAVAILABLE)


def re_replicate(objects, placements, cluster):
    """
    Plan replica additions for objects whose live spread fell below r.

    Existing replicas are never removed, including those on down
    locations. New replicas go to up locations in rendezvous order,
    skipping locations that already hold one.

    Args:
        objects (list): StorageObject list
        placements (dict): object id -> current ReplicaSet
        cluster (Cluster): Current location statuses

    Returns:
        list: PlacementChange per added replica
    """
    changes = []
    for obj in objects:
        current = placements[obj.id]
        live = [loc for loc in dict.fromkeys(current.locations) if cluster.locations[loc].is_up]
        missing = obj.replication_factor - len(live)
        if missing <= 0:
            continue
        up = cluster.locations_in(obj.region, up_only=True)
        for location in rendezvous_order(obj.id, up):
            if missing == 0:
                break
            if location in current.locations:
                continue
            changes.append(PlacementChange(obj.id, location))
            missing -= 1
    if changes:
        logger.info("Re-replication adds %d replicas", len(changes))
    return changes


def apply_changes(objects, placements, changes):
    """Return a new placement map with the changes appended."""
    by_id = {obj.id: obj for obj in objects}
    updated = dict(placements)
    for change in changes:
        current = updated[change.object_id]
        locations = current.locations + (change.location,)
        r = by_id[change.object_id].replication_factor
        updated[change.object_id] = ReplicaSet(change.object_id, locations, len(set(locations)) < r)
    return updated


def placements_frame(objects, placements):
    """Placement map as a DataFrame (object, region, locations, degraded)."""
    rows = [{
        "object": obj.id,
        "region": obj.region,
        "locations": ";".join(placements[obj.id].locations),
        "degraded": placements[obj.id].degraded,
    } for obj in objects]
    return pd.DataFrame(rows, columns=["object", "region", "locations", "degraded"])


def export_placements(objects, placements, path):
    placements_frame(objects, placements).to_csv(path, index=False)
