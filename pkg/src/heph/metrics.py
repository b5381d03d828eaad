"""Point-cloud and occupancy metrics for artifact-vs-reference comparison.

Implements the standard quartet: squared-distance Chamfer, F-score at a
radius tau, voxel-grid IoU, and the invalidity ratio, plus axis-aligned box
IoU. Point metrics can run in a normalized frame where the reference cloud
has unit diameter, which makes them invariant under joint rigid motion and
joint uniform scaling of both inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, EmptyList, FrameMismatch, InvalidSolid
from .mesh import OccupancyGrid, TriMesh, ValidityReport, sample_surface, validity, voxelize

BRUTE_FORCE_MAX = 512  # exact double-loop path below this size


@dataclass
class MetricConfig:
    sample_n: int = 8192
    tau_fraction: float = 0.01  # of the reference cloud diameter
    voxel_res: int = 64
    seed: int = 0
    normalize: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.tau_fraction < 1:
            raise ValueError("tau_fraction must be in (0, 1)")
        if self.sample_n < 16:
            raise ValueError("sample_n must be >= 16")


@dataclass
class MetricResult:
    chamfer: float  # squared-distance form; normalized frame unless configured off
    f_score: float
    precision: float
    recall: float
    tau: float
    voxel_iou: float
    box_iou: float
    generated_valid: bool
    config: MetricConfig
    notes: list[str] = field(default_factory=list)

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "metric_result/1",
            "chamfer_sq_normalized" if self.config.normalize else "chamfer_sq_mm2":
                ("invalid" if not np.isfinite(self.chamfer) else float(self.chamfer)),
            "f_score": float(self.f_score),
            "precision": float(self.precision),
            "recall": float(self.recall),
            "tau": float(self.tau),
            "voxel_iou": float(self.voxel_iou),
            "box_iou": float(self.box_iou),
            "generated_valid_solid": bool(self.generated_valid),
            "config": {
                "sample_n": self.config.sample_n,
                "tau_fraction": self.config.tau_fraction,
                "voxel_res": self.config.voxel_res,
                "seed": self.config.seed,
                "normalize": self.config.normalize,
            },
            "notes": list(self.notes),
        }


def _as_cloud(points: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
        raise EmptyCloud(f"{name}: expected a nonempty (n, 3) cloud")
    return arr


def _nn_sq_dists(src: np.ndarray, dst: np.ndarray, method: str = "auto") -> np.ndarray:
    """Squared distance from each src point to its nearest dst point.

    Both paths recompute the squared distance from the matched pair directly,
    so the spatial-index route is bit-identical to the brute-force route.
    """
    if method == "auto":
        method = "bruteforce" if max(len(src), len(dst)) <= BRUTE_FORCE_MAX else "kdtree"
    if method == "bruteforce":
        diff = src[:, None, :] - dst[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = np.argmin(d2, axis=1)
    elif method == "kdtree":
        _, idx = cKDTree(dst).query(src, k=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    pick = src - dst[idx]
    return np.einsum("ik,ik->i", pick, pick)


def chamfer(p: np.ndarray, q: np.ndarray, method: str = "auto") -> float:
    """Symmetric mean of squared nearest-neighbor distances."""
    p = _as_cloud(p, "P")
    q = _as_cloud(q, "Q")
    return float(np.mean(_nn_sq_dists(p, q, method)) + np.mean(_nn_sq_dists(q, p, method)))


def f_score(p: np.ndarray, q: np.ndarray, tau: float, method: str = "auto") -> tuple[float, float, float]:
    """(F, precision, recall) with points counted inside radius tau; 0/0 -> 0."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    p = _as_cloud(p, "P")
    q = _as_cloud(q, "Q")
    tau_sq = tau * tau
    precision = float(np.mean(_nn_sq_dists(p, q, method) <= tau_sq))
    recall = float(np.mean(_nn_sq_dists(q, p, method) <= tau_sq))
    f = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return f, precision, recall


def voxel_iou(a: OccupancyGrid, b: OccupancyGrid) -> float:
    if not a.same_frame(b):
        raise FrameMismatch("grids do not share a frame and resolution")
    inter = int(np.count_nonzero(a.occupied & b.occupied))
    union = int(np.count_nonzero(a.occupied | b.occupied))
    if union == 0:
        warnings.warn("both occupancy grids empty; IoU defined as 1.0", stacklevel=2)
        return 1.0
    return inter / union


Box = dict[str, tuple[float, float]]


def box_iou(a: Box, b: Box) -> float:
    inter = 1.0
    vol_a = 1.0
    vol_b = 1.0
    for ax in "xyz":
        alo, ahi = a[ax]
        blo, bhi = b[ax]
        vol_a *= max(0.0, ahi - alo)
        vol_b *= max(0.0, bhi - blo)
        inter *= max(0.0, min(ahi, bhi) - max(alo, blo))
    union = vol_a + vol_b - inter
    return inter / union if union > 0 else 0.0


def invalidity_ratio(reports: list[ValidityReport]) -> float:
    if not reports:
        raise EmptyList("invalidity ratio over zero reports")
    return sum(1 for r in reports if not r.valid_solid) / len(reports)


def cloud_diameter(points: np.ndarray) -> float:
    """Exact max pairwise distance (rotation invariant), hull-accelerated."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) == 1:
        return 0.0
    if len(pts) > 64:
        try:
            from scipy.spatial import ConvexHull

            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass  # degenerate (coplanar/collinear) input: brute force below
    best = 0.0
    for i in range(len(pts) - 1):
        d2 = np.einsum("ij,ij->i", pts[i + 1:] - pts[i], pts[i + 1:] - pts[i])
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def normalize_clouds(p: np.ndarray, q_ref: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """Scale both clouds by 1/diameter(reference) about the reference bbox center.

    The scale is the reference cloud's exact diameter rather than its
    axis-aligned bbox diagonal so normalized metrics stay invariant under
    joint rigid motion of both inputs.
    """
    q_ref = _as_cloud(q_ref, "reference")
    p = _as_cloud(p, "P")
    diameter = cloud_diameter(q_ref)
    if diameter <= 0:
        raise EmptyCloud("reference cloud has zero extent")
    center = (q_ref.min(axis=0) + q_ref.max(axis=0)) / 2.0
    return (p - center) / diameter, (q_ref - center) / diameter, diameter, center


def worst_case_result(config: MetricConfig, note: str) -> MetricResult:
    """Policy for submissions with no valid solid: worst-case everything."""
    return MetricResult(
        chamfer=float("inf"),
        f_score=0.0,
        precision=0.0,
        recall=0.0,
        tau=config.tau_fraction,
        voxel_iou=0.0,
        box_iou=0.0,
        generated_valid=False,
        config=config,
        notes=[note],
    )


def mesh_metrics(generated: TriMesh, reference: TriMesh, config: MetricConfig | None = None) -> MetricResult:
    """Full metric pipeline between a generated mesh and a reference mesh."""
    config = config or MetricConfig()
    if not validity(reference).valid_solid:
        raise InvalidSolid("reference mesh is not a valid solid")
    if not validity(generated).valid_solid:
        return worst_case_result(config, "generated mesh is not a valid solid")

    q = sample_surface(reference, config.sample_n, config.seed)
    p = sample_surface(generated, config.sample_n, config.seed + 1)

    notes = []
    if config.normalize:
        p_n, q_n, diameter, _ = normalize_clouds(p, q)
        tau = config.tau_fraction
        notes.append(f"normalized frame: reference diameter {diameter:.9g} mm -> 1")
    else:
        p_n, q_n = p, q
        tau = config.tau_fraction * cloud_diameter(q)

    cd = chamfer(p_n, q_n)
    f, precision, recall = f_score(p_n, q_n, tau)

    union_frame = {}
    gb = generated.bbox()
    rb = reference.bbox()
    for ax in "xyz":
        union_frame[ax] = (min(gb[ax][0], rb[ax][0]), max(gb[ax][1], rb[ax][1]))
    grid_g = voxelize(generated, config.voxel_res, union_frame)
    grid_r = voxelize(reference, config.voxel_res, union_frame)

    return MetricResult(
        chamfer=cd,
        f_score=f,
        precision=precision,
        recall=recall,
        tau=tau,
        voxel_iou=voxel_iou(grid_g, grid_r),
        box_iou=box_iou(gb, rb),
        generated_valid=True,
        config=config,
        notes=notes,
    )
