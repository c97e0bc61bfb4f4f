"""
Validate command for the stretched-cluster simulator.
Checks a scenario file and prints line-anchored diagnostics.
"""
import logging
import sys

from utils.errors import ScenarioError
from utils.scenario import load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def print_diagnostics(error: ScenarioError, stream=None):
    stream = stream or sys.stdout
    for diagnostic in error.diagnostics:
        print(diagnostic, file=stream)


def render_validate(path, stream=None):
    """
    Validate a scenario file.

    Args:
        path (str): Scenario JSON file
        stream: Where to print; defaults to stdout

    Returns:
        int: exit code, 0 iff the scenario is valid
    """
    stream = stream or sys.stdout
    try:
        scenario = load_scenario(path)
    except ScenarioError as e:
        print_diagnostics(e, stream)
        return EXIT_INVALID
    except OSError as e:
        print(f"cannot read {path}: {e}", file=stream)
        return EXIT_RUNTIME

    print("ok", file=stream)
    print(f"{scenario.name}: {len(scenario.cluster.nodes)} nodes, "
          f"{len(scenario.cluster.locations)} locations, {len(scenario.trace)} pods, "
          f"{len(scenario.objects)} objects", file=stream)
    return EXIT_OK
