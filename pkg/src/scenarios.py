"""
Benchmark workload presets.

Each preset is a flat dict of BenchmarkConfig field values; the uniform preset scales with
the shard count the way the scale-out experiments grow the space and the population.
"""
from typing import Any, Literal

PresetName = Literal["uniform", "gaussian", "cits"]

# Settings every preset shares
common_settings: dict[str, Any] = {
    "fence_side": 1000.0,
    "query_side": 1000.0,
    "max_speed": 80 / 3.6,
    "sensing_pct": 0.125,
    "query_ratio": 0.0,
}

# Uniform scale-out rows, keyed by shard count
uniform_by_shards: dict[int, dict[str, Any]] = {
    1: {"num_actors": 5000, "space_km2": 100.0, "cells": 100, "clients_per_shard": 8},
    2: {"num_actors": 10000, "space_km2": 199.94, "cells": 196, "clients_per_shard": 4},
    4: {"num_actors": 20000, "space_km2": 400.0, "cells": 400, "clients_per_shard": 4},
    8: {"num_actors": 40000, "space_km2": 799.98, "cells": 784, "clients_per_shard": 4},
}

gaussian_settings: dict[str, Any] = {
    "model": "gaussian",
    "num_actors": 40000,
    "space_km2": 799.98,
    "cells": 784,
    "hotspots": 800,
    "clients_per_shard": 4,
}

# Connected-vehicles scenario on a road network, 35 x 23 cells
cits_settings: dict[str, Any] = {
    "model": "roadnet",
    "num_actors": 38000,
    "space_km2": 154.0,
    "cells": 805,
    "grid_nx": 35,
    "grid_ny": 23,
    "fixed_speed": 22.0,
    "clients_per_shard": 4,
}


def _uniform_row(shards: int) -> dict[str, Any]:
    if shards in uniform_by_shards:
        return dict(uniform_by_shards[shards])
    side = round((100 * shards) ** 0.5)
    return {
        "num_actors": 5000 * shards,
        "space_km2": 100.0 * shards,
        "cells": side * side,
        "clients_per_shard": 4,
    }


def get_preset(name: str, shards: int = 1) -> dict[str, Any]:
    """Get the field values of a named preset for the given shard count.

    Args:
        name: One of list_presets()
        shards: Number of shards the run uses

    Returns:
        Dict of BenchmarkConfig field values, including `shards`

    Raises:
        KeyError: unknown preset name
    """
    if name == "uniform":
        row = {"model": "uniform", **_uniform_row(shards)}
    elif name == "gaussian":
        row = dict(gaussian_settings)
    elif name == "cits":
        row = dict(cits_settings)
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(list_presets())}")
    return {**common_settings, **row, "shards": shards}


def list_presets() -> list[str]:
    return ["uniform", "gaussian", "cits"]
