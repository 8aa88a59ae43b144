"""Scenario defaults and the scenario file parser.

A scenario file is plain key/value text: one ``key = value`` pair per line,
``#`` comments, and one ``anchor = x, y, z`` line per anchor. Keys:
num_floors, floor_height_m, length_m, breadth_m, window_height_m, anchor.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import AnchorConfig, BuildingModel

# Seven 3.5 m floors of a 20 m x 20 m building with a 1 m window band.
DEFAULT_NUM_FLOORS = 7
DEFAULT_FLOOR_HEIGHT = 3.5
DEFAULT_LENGTH = 20.0
DEFAULT_BREADTH = 20.0
DEFAULT_WINDOW_HEIGHT = 1.0

# Four hovering anchors on the facade side of the building, spread in x,
# stand-off distance, and height. Depth and height diversity is what makes
# adjacent floors distinguishable: with all anchors in one vertical plane a
# node's y coordinate can absorb a floor change almost exactly.
DEFAULT_ANCHORS = (
    (2.0, -3.0, 24.0),
    (18.0, -8.0, 3.0),
    (5.0, -14.0, 15.0),
    (15.0, -20.0, 9.0),
)


def default_building() -> BuildingModel:
    return BuildingModel(
        num_floors=DEFAULT_NUM_FLOORS,
        floor_height=DEFAULT_FLOOR_HEIGHT,
        length=DEFAULT_LENGTH,
        breadth=DEFAULT_BREADTH,
        window_height=DEFAULT_WINDOW_HEIGHT,
    )


def default_anchors() -> AnchorConfig:
    return AnchorConfig(np.array(DEFAULT_ANCHORS, dtype=float))


_SCALAR_KEYS = {
    "num_floors": int,
    "floor_height_m": float,
    "length_m": float,
    "breadth_m": float,
    "window_height_m": float,
}


def load_scenario(path) -> tuple[BuildingModel, AnchorConfig]:
    """Parse a scenario file into a building and anchor configuration."""
    values = {}
    anchors = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                if key == "anchor":
                    parts = [float(v) for v in value.split(",")]
                    if len(parts) != 3:
                        raise ValueError
                    anchors.append(parts)
                elif key in _SCALAR_KEYS:
                    values[key] = _SCALAR_KEYS[key](value)
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: could not parse value for {key!r}: {value!r}"
                ) from None
    missing = set(_SCALAR_KEYS) - set(values)
    if missing:
        raise ConfigError(f"{path}: missing keys: {sorted(missing)}")
    if len(anchors) < 3:
        raise ConfigError(f"{path}: need at least 3 'anchor = x, y, z' lines")
    try:
        building = BuildingModel(
            num_floors=values["num_floors"],
            floor_height=values["floor_height_m"],
            length=values["length_m"],
            breadth=values["breadth_m"],
            window_height=values["window_height_m"],
        )
        anchor_config = AnchorConfig(np.array(anchors, dtype=float))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return building, anchor_config
