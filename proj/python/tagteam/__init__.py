"""Human-drone teaming simulator: Python bindings over the C++ core."""

import json as _json

from ._core import (  # noqa: F401
    TagTeamError,
    circle_trajectory,
    decode_packet,
    drone_delta_to_wearable_delta,
    dtw,
    ellipse_trajectory,
    encode_publish,
    is_in_blindspot,
    load_annotations,
    relative_polar,
    similarity,
    sync_report,
    topic_matches,
    wearable_delta_to_drone_delta,
)
from ._core import run_scenario as _run_scenario


def run_scenario(config=None):
    """Run a scenario. `config` is a dict or JSON string in the CLI config schema."""
    if config is None:
        config = {}
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run_scenario(config)


__all__ = [
    "TagTeamError",
    "circle_trajectory",
    "decode_packet",
    "drone_delta_to_wearable_delta",
    "dtw",
    "ellipse_trajectory",
    "encode_publish",
    "is_in_blindspot",
    "load_annotations",
    "relative_polar",
    "run_scenario",
    "similarity",
    "sync_report",
    "topic_matches",
    "wearable_delta_to_drone_delta",
]
