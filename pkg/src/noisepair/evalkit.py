"""Scene-fidelity evaluation over the boundary region, plus report emission.

Backgrounds far from the object can always be pasted back verbatim, so the
interesting scene errors live in the band between the object and its
bounding rectangle. Metrics here are restricted to that band: both images
are zeroed outside it before anything is computed, which makes the result
provably insensitive to changes strictly inside the dilated object mask or
strictly outside the rectangle.

Built-in metrics are MSE and a windowed structural dissimilarity (1 - SSIM).
Perceptual metrics backed by pretrained networks are reachable only through
a bridge session's metric capability.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .maskops import BinaryMask, boundary_region, default_boundary_dilate_radius

__all__ = [
    "EvalRow",
    "EvalReport",
    "region_metric",
    "ssim_map",
    "emit_report",
    "make_2afc_trial",
    "TRAINED_BACKEND_REFERENCE",
]

# Reference measurements from the trained production backend, recorded for
# context only -- desk-scale denoisers cannot and should not reproduce them.
TRAINED_BACKEND_REFERENCE = {
    "dreamsim_by_refinement_round": {1: 0.4653, 2: 0.4428, 3: 0.4366, 4: 0.4405},
    "dreamsim_box_mask_conditioning": 0.4428,
    "dreamsim_fine_mask_conditioning": 0.4600,
}

SSIM_WINDOW = 7
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-pixel SSIM with a uniform 7x7 window, averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    size = (0, SSIM_WINDOW, SSIM_WINDOW) if a.ndim == 3 else SSIM_WINDOW

    # sample (unbiased) second moments, per the canonical SSIM definition
    n = SSIM_WINDOW * SSIM_WINDOW
    cov_norm = n / (n - 1)
    mu_a = ndimage.uniform_filter(a, size=size)
    mu_b = ndimage.uniform_filter(b, size=size)
    var_a = cov_norm * (ndimage.uniform_filter(a * a, size=size) - mu_a * mu_a)
    var_b = cov_norm * (ndimage.uniform_filter(b * b, size=size) - mu_b * mu_b)
    cov = cov_norm * (ndimage.uniform_filter(a * b, size=size) - mu_a * mu_b)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    out = num / den
    return out.mean(axis=0) if out.ndim == 3 else out


def region_metric(
    source: np.ndarray,
    result: np.ndarray,
    fine_mask: BinaryMask,
    metric: str = "mse",
    dilate_radius: int | None = None,
    rect_margin: int = 0,
    session=None,
) -> float:
    """Distance between two images over the boundary region only.

    ``metric`` is "mse", "ssim" (reported as 1 - SSIM), or any id the bridge
    session's metric backend accepts (requires ``session``). Both images are
    zeroed outside the region before computation.
    """
    source = np.asarray(source, dtype=np.float64)
    result = np.asarray(result, dtype=np.float64)
    if source.shape != result.shape:
        raise ValueError(f"image shapes differ: {source.shape} vs {result.shape}")
    if source.shape[-2:] != (fine_mask.height, fine_mask.width):
        raise ValueError("mask resolution does not match the images")
    if dilate_radius is None:
        dilate_radius = default_boundary_dilate_radius(fine_mask.height, fine_mask.width)
    region = boundary_region(fine_mask, dilate_radius, rect_margin)
    if region.is_empty:
        raise ValueError("boundary region is empty; geometry is degenerate")

    sel = region.bits
    keep = sel[None, :, :] if source.ndim == 3 else sel
    src = np.where(keep, source, 0.0)
    res = np.where(keep, result, 0.0)

    if metric == "mse":
        diff = src - res
        per_pixel = np.square(diff).mean(axis=0) if diff.ndim == 3 else np.square(diff)
        return float(per_pixel[sel].mean())
    if metric == "ssim":
        return float(1.0 - ssim_map(src, res)[sel].mean())
    if session is None:
        raise ValueError(f"metric {metric!r} requires a bridge session")
    return session.metric(src, res, metric)


@dataclass
class EvalRow:
    id: str
    region_pixel_count: int
    region_metric_value: float
    metric_id: str

    @property
    def valid(self) -> bool:
        return math.isfinite(self.region_metric_value)


@dataclass
class EvalReport:
    rows: list[EvalRow]
    mean: float
    median: float
    flagged: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [row.__dict__ for row in self.rows],
                "aggregates": {"mean": self.mean, "median": self.median, "flagged": self.flagged},
            },
            sort_keys=True,
        )


_CSV_COLUMNS = ["id", "region_pixel_count", "region_metric_value", "metric_id", "flagged"]


def emit_report(rows: list[EvalRow], csv_path: str | Path | None = None, json_path: str | Path | None = None) -> EvalReport:
    """Aggregate rows into a report; non-finite rows are flagged and excluded
    from the aggregates but still counted and emitted."""
    if not rows:
        raise ValueError("cannot emit a report with zero rows")
    valid = [row.region_metric_value for row in rows if row.valid]
    flagged = len(rows) - len(valid)
    if not valid:
        raise ValueError("all rows are flagged; no aggregate is defined")
    report = EvalReport(
        rows=list(rows),
        mean=float(statistics.fmean(valid)),
        median=float(statistics.median(valid)),
        flagged=flagged,
    )
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for row in rows:
                writer.writerow(
                    [row.id, row.region_pixel_count, repr(row.region_metric_value),
                     row.metric_id, int(not row.valid)]
                )
            writer.writerow(["mean", "", repr(report.mean), "", ""])
            writer.writerow(["median", "", repr(report.median), "", ""])
    if json_path is not None:
        Path(json_path).write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def make_2afc_trial(
    source: np.ndarray,
    reference: np.ndarray,
    ours: np.ndarray,
    baseline: np.ndarray,
    pair_id: str,
    our_method: str,
    baseline_method: str,
    seed: int,
    out_dir: str | Path,
) -> dict:
    """Emit one two-alternative forced-choice trial: a 4-panel strip plus a
    JSON record. Left/right placement of the two outputs is randomized from
    the seed to cancel position bias; querying any judge is out of scope.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    ours_left = bool(rng.integers(0, 2))
    left, right = (ours, baseline) if ours_left else (baseline, ours)
    left_method, right_method = (our_method, baseline_method) if ours_left else (baseline_method, our_method)

    panels = [np.asarray(p, dtype=np.float64) for p in (source, reference, left, right)]
    height = max(p.shape[1] for p in panels)
    padded = []
    for p in panels:
        if p.shape[1] < height:
            pad = np.zeros((p.shape[0], height - p.shape[1], p.shape[2]))
            p = np.concatenate([p, pad], axis=1)
        padded.append(p)
    strip = np.clip(np.concatenate(padded, axis=2), 0.0, 1.0)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image_path = out_dir / f"{pair_id}_2afc.png"
    u8 = np.round(strip * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(image_path, format="PNG")

    record = {
        "pair_id": pair_id,
        "left_method": left_method,
        "right_method": right_method,
        "seed": seed,
        "image_path": str(image_path),
    }
    (out_dir / f"{pair_id}_2afc.json").write_text(json.dumps(record, sort_keys=True) + "\n", encoding="utf-8")
    return record
