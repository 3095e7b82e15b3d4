"""Problem instances: street network, demand model, fleet and service period."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

from .demand import DemandModel, DemandSpec, DurationLaw
from .network import StreetGraph, TravelTimeOracle, generate_grid, kmh_to_m_per_min, load_graph


class InstanceError(ValueError):
    pass


# block length of the desk-scale grid; see the calibration notes in the README
DESK_SPACING = 2000.0

GRID_KEYS = {"rows", "cols", "spacing", "seed", "jitter", "depot"}


@dataclass
class Instance:
    name: str
    graph: StreetGraph
    demand: DemandSpec
    K: int
    horizon: float = 600.0
    speed_kmh: float = 20.0
    seed: int = 0
    grid: Optional[dict] = None  # inline grid parameters, if generated
    graph_path: Optional[str] = None

    def __post_init__(self):
        if self.K < 1:
            raise InstanceError("fleet size must be at least 1")
        if not self.horizon > 0:
            raise InstanceError("service period must be positive")
        if not self.speed_kmh > 0:
            raise InstanceError("speed must be positive")
        if abs(self.demand.horizon - self.horizon) > 1e-9:
            raise InstanceError("demand horizon differs from the instance service period")

    @cached_property
    def oracle(self) -> TravelTimeOracle:
        return TravelTimeOracle(self.graph, kmh_to_m_per_min(self.speed_kmh))

    @cached_property
    def model(self) -> DemandModel:
        return DemandModel(self.demand, self.graph)

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("model", None)  # rebuilt cheaply; the oracle pickles its own way
        return state

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "K": self.K,
            "horizon": self.horizon,
            "speed_kmh": self.speed_kmh,
            "seed": self.seed,
            "demand": self.demand.to_json(),
        }
        if self.grid is not None:
            out["grid"] = dict(self.grid)
        elif self.graph_path is not None:
            out["graph"] = self.graph_path
        else:
            out["graph_inline"] = self.graph.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict, base_dir: Optional[Path] = None) -> "Instance":
        try:
            grid = data.get("grid")
            graph_path = data.get("graph")
            if grid is not None:
                unknown = set(grid) - GRID_KEYS
                if unknown:
                    raise InstanceError(f"unknown grid keys {sorted(unknown)}")
                graph = generate_grid(**grid)
            elif graph_path is not None:
                p = Path(graph_path)
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
                if not p.exists():
                    raise InstanceError(f"graph file {p} does not exist")
                graph = load_graph(p)
            elif "graph_inline" in data:
                graph = StreetGraph.from_json(data["graph_inline"])
            else:
                raise InstanceError("instance needs a grid, graph or graph_inline entry")
            demand = DemandSpec.from_json(data["demand"])
            return cls(
                name=str(data.get("name", "instance")),
                graph=graph,
                demand=demand,
                K=int(data["K"]),
                horizon=float(data.get("horizon", demand.horizon)),
                speed_kmh=float(data.get("speed_kmh", 20.0)),
                seed=int(data.get("seed", 0)),
                grid=grid,
                graph_path=graph_path,
            )
        except KeyError as exc:
            raise InstanceError(f"instance is missing field {exc}") from None


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InstanceError(f"instance file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise InstanceError(f"instance file {path} is not valid JSON: {exc}") from None
    return Instance.from_json(data, path.parent)


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_json(), indent=2) + "\n")


def grid_instance(
    name: str = "desk",
    rows: int = 20,
    cols: int = 20,
    spacing: float = DESK_SPACING,
    rate: float = 0.1,
    dynamism: float = 0.75,
    K: int = 3,
    horizon: float = 600.0,
    speed_kmh: float = 20.0,
    pattern: str = "CTD",
    seed: int = 0,
    jitter: float = 0.1,
    radius: float = 3000.0,
    clustered_share: float = 0.5,
    duration_law: Optional[DurationLaw] = None,
) -> Instance:
    """A grid instance with the depot at the south-east corner."""
    grid = {"rows": rows, "cols": cols, "spacing": spacing, "seed": seed, "jitter": jitter, "depot": "southeast"}
    graph = generate_grid(**grid)
    demand = DemandSpec.from_pattern(
        graph, rate, horizon, pattern, dynamism=dynamism, radius=radius,
        clustered_share=clustered_share, duration_law=duration_law,
    )
    return Instance(name, graph, demand, K, horizon, speed_kmh, seed, grid)
