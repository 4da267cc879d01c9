"""Synthetic CVRP families that share one hidden cluster geometry.

Every instance is drawn from the same latent layout: parallel bands of
customers, one band per vehicle, pushed through a fixed anisotropic linear
map. Bands come out long and close together, so plain Euclidean clustering
cuts across them, while the good routes follow them.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .instance import RoutingInstance, parse_cvrp, to_text


def hidden_map(stretch: float = 10.0, angle_deg: float = 25.0) -> np.ndarray:
    """Fixed linear map: stretch the band axis, then rotate."""
    a = np.deg2rad(angle_deg)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return R @ np.diag([stretch, 1.0])


def band_instance_text(name: str, rng: np.random.Generator, k: int = 5, per_band=(8, 12),
                       A: np.ndarray | None = None, spacing: float = 30.0, width: float = 1.5,
                       half_length: float = 10.0) -> str:
    """TSPLIB text for one instance of the band family.

    Band ``c`` sits at latent height ``c * spacing``; positions along the
    band are uniform in ``[-half_length, half_length]`` before the map
    stretches them. Each band's total demand equals the capacity, so the
    natural solution uses one vehicle per band.
    """
    A = hidden_map() if A is None else A
    counts = rng.integers(per_band[0], per_band[1] + 1, size=k)
    pts, dem = [], []
    for c, m in enumerate(counts):
        along = rng.uniform(-half_length, half_length, m)
        across = c * spacing + rng.normal(0, width, m)
        pts.append(np.stack([along, across]))
        dem.append(rng.integers(1, 10, m))
    latent = np.concatenate(pts, axis=1)
    capacity = int(max(d.sum() for d in dem))
    for d in dem:  # top up each band so every band exactly fills a vehicle
        d[-1] += capacity - d.sum()
    demands = np.concatenate(dem)
    xy = A @ latent
    # depot off the near end of the bands, level with their middle
    depot = A @ np.array([-1.5 * half_length, (k - 1) * spacing / 2])
    offset = np.minimum(xy.min(axis=1), depot) - 10.0
    xy = xy - offset[:, None]
    depot = depot - offset
    n = xy.shape[1] + 1
    lines = [f"NAME : {name}", "COMMENT : synthetic band family", "TYPE : CVRP",
             f"DIMENSION : {n}", "EDGE_WEIGHT_TYPE : EUC_2D", f"CAPACITY : {capacity}",
             "NODE_COORD_SECTION", f"1 {depot[0]:.3f} {depot[1]:.3f}"]
    lines += [f"{i + 2} {x:.3f} {y:.3f}" for i, (x, y) in enumerate(xy.T)]
    lines += ["DEMAND_SECTION", "1 0"] + [f"{i + 2} {int(d)}" for i, d in enumerate(demands)]
    lines += ["DEPOT_SECTION", "1", "-1", "EOF"]
    return "\n".join(lines) + "\n"


def band_family(n_instances: int = 6, seed: int = 0, k: int = 5, **kw) -> list[RoutingInstance]:
    """``n_instances`` related instances with 40 to 60 customers each."""
    rng = np.random.default_rng(seed)
    out = []
    for j in range(n_instances):
        text = band_instance_text("tmp", rng, k=k, **kw)
        n = int(text.split("DIMENSION : ")[1].split()[0])
        out.append(parse_cvrp(text.replace("NAME : tmp", f"NAME : B{j}-n{n}-k{k}", 1)))
    return out


def write_family(directory, instances) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for inst in instances:
        p = directory / f"{inst.name}.vrp"
        p.write_text(to_text(inst))
        paths.append(p)
    return paths
