"""Pseudo-pair construction and training-batch assembly.

A dataset manifest (JSON lines) feeds entries through mask filtering,
invert -> perturb -> re-sample, and out the other side come pair records with
complete provenance: everything needed to regenerate a perturbed image
bit-identically with the same backend. Entry failures are skipped and logged,
never fatal to the batch.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from PIL import Image
from scipy import ndimage

from .bridge import save_tensor
from .ddim import ConditioningRef, Denoiser, NoiseSchedule, ddim_invert, ddim_sample
from .lattice import LatentGrid
from .maskops import (
    BBox,
    BinaryMask,
    clean_reference_mask,
    default_clean_radius,
    load_mask,
    resample_to_latent,
    size_filter,
    to_bbox_mask,
)
from .perturb import DEFAULT_STOP_FREQUENCY, PermutationSpec, PerturbMode, perturb_initial_noise

__all__ = [
    "ManifestEntry",
    "DatasetManifest",
    "IngestResult",
    "ManifestError",
    "PairRecord",
    "PairResult",
    "PerturbParams",
    "TrainingSample",
    "LatentCodec",
    "IdentityCodec",
    "AvgPool4Codec",
    "get_codec",
    "ingest",
    "build_pair",
    "build_pairs",
    "augment_reference",
    "assemble_training_sample",
    "draw_training_timestep",
    "derive_entry_seed",
    "load_image",
    "save_image",
    "caption_token",
]


# --------------------------------------------------------------------------
# images

def load_image(path: str | Path) -> np.ndarray:
    """Load a PNG as a (3, H, W) float array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Save a (3, H, W) float array in [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


# --------------------------------------------------------------------------
# codecs

@runtime_checkable
class LatentCodec(Protocol):
    """Image <-> latent transform; stands in for a frozen autoencoder."""

    codec_id: str
    channels: int | None
    scale: int | None

    def encode(self, image: np.ndarray) -> LatentGrid: ...

    def decode(self, z: LatentGrid) -> np.ndarray: ...


class IdentityCodec:
    """Pixels are the latents; exact round trip."""

    codec_id = "identity"
    channels = 3
    scale = 1

    def encode(self, image: np.ndarray) -> LatentGrid:
        return LatentGrid(np.asarray(image, dtype=np.float64))

    def decode(self, z: LatentGrid) -> np.ndarray:
        return z.data.copy()


class AvgPool4Codec:
    """Area-average 4x down on encode, nearest 4x up on decode."""

    codec_id = "avgpool4"
    channels = 3
    scale = 4

    def encode(self, image: np.ndarray) -> LatentGrid:
        arr = np.asarray(image, dtype=np.float64)
        c, h, w = arr.shape
        if h % 4 or w % 4:
            raise ValueError(f"avgpool4 needs dimensions divisible by 4, got {h}x{w}")
        pooled = arr.reshape(c, h // 4, 4, w // 4, 4).mean(axis=(2, 4))
        return LatentGrid(pooled)

    def decode(self, z: LatentGrid) -> np.ndarray:
        return np.repeat(np.repeat(z.data, 4, axis=1), 4, axis=2)


_CODECS = {"identity": IdentityCodec, "avgpool4": AvgPool4Codec}


def get_codec(name: str) -> LatentCodec:
    try:
        return _CODECS[name]()
    except KeyError:
        raise ValueError(f"unknown codec {name!r}; available: {sorted(_CODECS)}") from None


# --------------------------------------------------------------------------
# manifests

class ManifestError(ValueError):
    """Manifest-level failure that invalidates the whole ingest."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path
    mask_path: Path
    caption: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[ManifestEntry, ...]


@dataclass(frozen=True)
class IngestResult:
    manifest: DatasetManifest
    rejects: tuple[dict, ...]


def ingest(manifest_path: str | Path, root: str | Path | None = None) -> IngestResult:
    """Parse a JSON-lines manifest of {id, image_path, mask_path, caption}.

    Malformed lines (bad JSON, missing keys, unresolvable paths) land in the
    rejects report. Zero valid entries or a duplicate id is fatal.
    """
    manifest_path = Path(manifest_path)
    root = Path(root) if root is not None else manifest_path.parent
    entries: list[ManifestEntry] = []
    rejects: list[dict] = []
    seen: set[str] = set()
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append({"line": lineno, "reason": f"invalid JSON: {exc.msg}"})
                continue
            if not isinstance(row, dict) or not {"id", "image_path", "mask_path"} <= row.keys():
                rejects.append({"line": lineno, "reason": "missing id/image_path/mask_path"})
                continue
            entry_id = str(row["id"])
            if entry_id in seen:
                raise ManifestError(f"duplicate entry id {entry_id!r} at line {lineno}")
            image_path = root / str(row["image_path"])
            mask_path = root / str(row["mask_path"])
            missing = [str(p) for p in (image_path, mask_path) if not p.is_file()]
            if missing:
                rejects.append({"line": lineno, "id": entry_id, "reason": f"missing files: {missing}"})
                continue
            seen.add(entry_id)
            entries.append(
                ManifestEntry(
                    id=entry_id,
                    image_path=image_path,
                    mask_path=mask_path,
                    caption=str(row.get("caption", "")),
                )
            )
    if not entries:
        raise ManifestError(f"no valid entries in {manifest_path}")
    return IngestResult(DatasetManifest(root=root, entries=tuple(entries)), tuple(rejects))


def caption_token(caption: str) -> int:
    """Stable 64-bit conditioning token for a caption; mapping to an
    embedding is the backend's concern."""
    return int.from_bytes(hashlib.sha256(caption.encode("utf-8")).digest()[:8], "little")


def derive_entry_seed(run_seed: int, entry_id: str) -> int:
    """Stable per-entry seed so parallel runs stay reproducible."""
    digest = hashlib.sha256(f"{run_seed}:{entry_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# --------------------------------------------------------------------------
# pair construction

@dataclass(frozen=True)
class PerturbParams:
    mode: PerturbMode = PerturbMode.HIGH_ONLY
    seed: int = 0
    stop_frequency: float = DEFAULT_STOP_FREQUENCY
    permutation: PermutationSpec | None = None


@dataclass
class PairRecord:
    """Provenance of one pseudo pair; sufficient to regenerate it."""

    id: str
    source_path: str
    perturbed_path: str | None
    mask_path: str
    seed: int
    mode: str
    stop_frequency: float
    schedule: dict
    codec_id: str
    cond_token: int
    created_at: str = ""

    def to_json(self) -> str:
        body = dict(self.__dict__)
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "PairRecord":
        return cls(**json.loads(line))


@dataclass
class PairResult:
    record: PairRecord
    source_image: np.ndarray
    perturbed_image: np.ndarray
    latent_mask: BinaryMask
    initial_noise: LatentGrid
    perturbed_noise: LatentGrid


class EntrySkipped(RuntimeError):
    """Entry could not become a pair; carries the reason for the log."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def build_pair(
    entry: ManifestEntry,
    codec: LatentCodec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    params: PerturbParams,
) -> PairResult:
    """Turn one image+mask entry into a pseudo pair.

    Invert the source latent to its initial noise, perturb inside the mask,
    and sample back down. Raises EntrySkipped for filtered or degenerate
    entries so batch drivers can log and continue.
    """
    image = load_image(entry.image_path)
    mask = load_mask(entry.mask_path)
    if mask.bits.shape != image.shape[1:]:
        raise EntrySkipped(f"mask shape {mask.bits.shape} != image shape {image.shape[1:]}")
    decision = size_filter(mask, image.shape[1], image.shape[2])
    if not decision.accepted:
        raise EntrySkipped(f"mask size: {decision.reason}")

    cond = ConditioningRef(caption_token(entry.caption))
    z0 = codec.encode(image)
    trajectory = ddim_invert(z0, denoiser, schedule, cond)
    z_T = trajectory[-1]

    latent_mask = resample_to_latent(mask, z_T.height, z_T.width)
    if latent_mask.is_empty:
        raise EntrySkipped("mask vanished at latent resolution")

    perturbed_noise = perturb_initial_noise(
        z_T,
        latent_mask,
        mode=params.mode,
        seed=params.seed,
        stop_frequency=params.stop_frequency,
        permutation=params.permutation,
    )
    perturbed_image = codec.decode(ddim_sample(perturbed_noise, denoiser, schedule, cond))

    record = PairRecord(
        id=entry.id,
        source_path=str(entry.image_path),
        perturbed_path=None,
        mask_path=str(entry.mask_path),
        seed=params.seed,
        mode=PerturbMode(params.mode).value,
        stop_frequency=params.stop_frequency,
        schedule=dict(schedule.summary),
        codec_id=codec.codec_id,
        cond_token=cond.token,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    return PairResult(
        record=record,
        source_image=image,
        perturbed_image=perturbed_image,
        latent_mask=latent_mask,
        initial_noise=z_T,
        perturbed_noise=perturbed_noise,
    )


@dataclass
class RunSummary:
    records: list[PairRecord] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.skipped


def build_pairs(
    manifest: DatasetManifest,
    codec: LatentCodec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    out_dir: str | Path,
    run_seed: int = 0,
    mode: PerturbMode | str = PerturbMode.HIGH_ONLY,
    stop_frequency: float = DEFAULT_STOP_FREQUENCY,
    jobs: int = 1,
    save_noise: bool = False,
) -> RunSummary:
    """Build pairs for every manifest entry; skip-and-log on failure.

    Entries are processed independently with per-entry seeds derived from
    (run_seed, entry id), so results do not depend on worker count or order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(entry: ManifestEntry):
        params = PerturbParams(
            mode=PerturbMode(mode),
            seed=derive_entry_seed(run_seed, entry.id),
            stop_frequency=stop_frequency,
        )
        result = build_pair(entry, codec, denoiser, schedule, params)
        perturbed_path = out_dir / f"{entry.id}_perturbed.png"
        save_image(result.perturbed_image, perturbed_path)
        if save_noise:
            save_tensor(result.perturbed_noise.data, out_dir / f"{entry.id}_noise.twr")
        result.record.perturbed_path = str(perturbed_path)
        return result.record

    summary = RunSummary()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = {entry.id: pool.submit(run_one, entry) for entry in manifest.entries}
    for entry in manifest.entries:
        try:
            summary.records.append(futures[entry.id].result())
        except EntrySkipped as exc:
            summary.skipped.append({"id": entry.id, "reason": exc.reason})
        except Exception as exc:  # per-entry isolation: nothing is fatal here
            summary.skipped.append({"id": entry.id, "reason": f"{type(exc).__name__}: {exc}"})

    with open(out_dir / "pairs.jsonl", "w", encoding="utf-8") as fh:
        for record in summary.records:
            missing = [p for p in (record.source_path, record.perturbed_path, record.mask_path)
                       if not Path(p).is_file()]
            if missing:
                raise RuntimeError(f"record {record.id} references missing files {missing}")
            fh.write(record.to_json() + "\n")
    with open(out_dir / "skipped.jsonl", "w", encoding="utf-8") as fh:
        for row in summary.skipped:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------------
# reference augmentation

_AUG_RANGES = {
    "blur": (0.5, 2.0),
    "zoom": (0.8, 1.25),
    "perspective": (0.0, 0.05),
    "elastic": (0.5, 2.0),
}


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective transform mapping src (x, y) points onto dst points."""
    rows, rhs = [], []
    for (xs, ys), (xd, yd) in zip(src, dst):
        rows.append([xs, ys, 1, 0, 0, 0, -xs * xd, -ys * xd])
        rows.append([0, 0, 0, xs, ys, 1, -xs * yd, -ys * yd])
        rhs.extend([xd, yd])
    params = np.linalg.solve(np.asarray(rows, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.append(params, 1.0).reshape(3, 3)


def _warp(image: np.ndarray, coords_y: np.ndarray, coords_x: np.ndarray) -> np.ndarray:
    out = np.empty_like(image)
    for c in range(image.shape[0]):
        out[c] = ndimage.map_coordinates(image[c], [coords_y, coords_x], order=1, mode="constant")
    return out


def augment_reference(crop: np.ndarray, ops: list, seed: int = 0) -> np.ndarray:
    """Apply appearance augmentations in order with seeded parameters.

    ``ops`` items are names ("blur", "zoom", "perspective", "elastic") or
    (name, params) tuples; unspecified parameters are drawn from the
    documented mild ranges so identity cues survive.
    """
    img = np.asarray(crop, dtype=np.float64)
    if img.ndim != 3 or min(img.shape) < 1:
        raise ValueError("crop must be a non-empty (C, H, W) array")
    rng = np.random.Generator(np.random.PCG64(seed))
    for op in ops:
        name, given = (op, {}) if isinstance(op, str) else (op[0], dict(op[1]))
        if name == "blur":
            sigma = given.get("sigma", rng.uniform(*_AUG_RANGES["blur"]))
            img = ndimage.gaussian_filter(img, sigma=(0, sigma, sigma))
        elif name == "zoom":
            scale = given.get("scale", rng.uniform(*_AUG_RANGES["zoom"]))
            if scale <= 0:
                raise ValueError(f"zoom scale must be positive, got {scale}")
            if scale != 1.0:
                h, w = img.shape[1:]
                cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
                yy, xx = np.mgrid[0:h, 0:w]
                img = _warp(img, cy + (yy - cy) / scale, cx + (xx - cx) / scale)
        elif name == "perspective":
            jitter = given.get("jitter", rng.uniform(*_AUG_RANGES["perspective"]))
            img = _perspective(img, jitter, rng)
        elif name == "elastic":
            alpha = given.get("alpha", rng.uniform(*_AUG_RANGES["elastic"]))
            smooth = given.get("smooth", 4.0)
            h, w = img.shape[1:]
            dy = ndimage.gaussian_filter(rng.standard_normal((h, w)), smooth)
            dx = ndimage.gaussian_filter(rng.standard_normal((h, w)), smooth)
            peak = max(np.abs(dy).max(), np.abs(dx).max(), 1e-12)
            dy, dx = dy / peak * alpha, dx / peak * alpha
            yy, xx = np.mgrid[0:h, 0:w]
            img = _warp(img, yy + dy, xx + dx)
        else:
            raise ValueError(f"unknown augmentation {name!r}")
    return img


def _perspective(img: np.ndarray, jitter: float, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[1:]
    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    for attempt in range(8):
        offsets = rng.uniform(-jitter, jitter, size=(4, 2)) * np.array([w, h])
        src = corners + offsets
        try:
            hom = _homography(corners, src)
        except np.linalg.LinAlgError:
            continue  # degenerate corners; redraw
        yy, xx = np.mgrid[0:h, 0:w]
        denom = hom[2, 0] * xx + hom[2, 1] * yy + hom[2, 2]
        if np.abs(denom).min() < 1e-8:
            continue  # non-invertible over the frame; redraw
        cx = (hom[0, 0] * xx + hom[0, 1] * yy + hom[0, 2]) / denom
        cy = (hom[1, 0] * xx + hom[1, 1] * yy + hom[1, 2]) / denom
        return _warp(img, cy, cx)
    raise ValueError("could not draw an invertible perspective warp")


# --------------------------------------------------------------------------
# training samples

@dataclass
class TrainingSample:
    """One training example assembled from a pseudo pair.

    The reference branch sees a clean, augmented crop at timestep 0 (never
    any added noise); the denoiser branch sees the source latent noised at a
    uniformly drawn timestep. The clean source is the target and the
    perturbed source is the condition, never the other way around.
    """

    pair_id: str
    reference_crop: np.ndarray
    reference_timestep: int
    timestep: int
    noisy_latent: LatentGrid
    box_mask: BinaryMask
    condition_path: str
    target_path: str
    noise_seed: int


def draw_training_timestep(rng: np.random.Generator, steps: int) -> int:
    """Uniform draw over the inclusive timestep range 0..steps."""
    return int(rng.integers(0, steps + 1))


def assemble_training_sample(
    record: PairRecord,
    schedule: NoiseSchedule,
    seed: int,
    codec: LatentCodec,
    augment_ops: list | None = None,
    clean_radius: int | None = None,
    box_margin: int = 0,
) -> TrainingSample:
    """Build the reference/denoiser input bundle for one pair record."""
    for path in (record.source_path, record.perturbed_path, record.mask_path):
        if path is None or not Path(path).is_file():
            raise FileNotFoundError(f"pair record {record.id} references missing file {path!r}")

    source = load_image(record.source_path)
    mask = load_mask(record.mask_path)
    radius = clean_radius if clean_radius is not None else default_clean_radius(mask.height, mask.width)
    cleaned = clean_reference_mask(mask, radius)
    if cleaned.is_empty:
        raise ValueError(f"cleaned mask for {record.id} is empty; nothing to crop")
    box = BBox.of_mask(cleaned)
    crop = source[:, box.row_min : box.row_max + 1, box.col_min : box.col_max + 1]

    rng = np.random.Generator(np.random.PCG64(seed))
    reference_crop = augment_reference(crop, augment_ops or [], seed=int(rng.integers(2**63)))

    t = draw_training_timestep(rng, schedule.steps)
    z0 = codec.encode(source)
    ab = schedule.alpha_bar_at(t)
    noise = rng.standard_normal(z0.shape)
    noisy = LatentGrid(math.sqrt(ab) * z0.data + math.sqrt(1.0 - ab) * noise)

    return TrainingSample(
        pair_id=record.id,
        reference_crop=reference_crop,
        reference_timestep=0,
        timestep=t,
        noisy_latent=noisy,
        box_mask=to_bbox_mask(mask, box_margin),
        condition_path=record.perturbed_path,
        target_path=record.source_path,
        noise_seed=seed,
    )
