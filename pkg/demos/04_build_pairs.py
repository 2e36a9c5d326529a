"""
Pseudo pairs from a synthetic manifest
======================================

Build a three-entry dataset on disk (one mask intentionally fails the size
filter), run the batch pipeline end to end with built-in parts, and show
what the records carry. The same flow is available as
`noisepair make-pairs --manifest ... --out ...`.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from noisepair.ddim import NoiseSchedule, analytic_gaussian_denoiser
from noisepair.maskops import BinaryMask, save_mask
from noisepair.pipeline import IdentityCodec, build_pairs, ingest, save_image

root = Path(tempfile.mkdtemp(prefix="noisepair_demo_"))
rng = np.random.default_rng(0)

lines = []
for i, frac in enumerate([0.45, 0.6, 0.05]):  # 0.05 is below the 1/5 floor
    img = rng.integers(0, 256, (3, 64, 64)).astype(np.float64) / 255.0
    save_image(img, root / f"img_{i}.png")
    half = int(64 * frac / 2)
    bits = np.zeros((64, 64), dtype=bool)
    bits[32 - half : 32 + half, 32 - half : 32 + half] = True
    save_mask(BinaryMask(bits), root / f"mask_{i}.png")
    lines.append(json.dumps({"id": f"sample_{i}", "image_path": f"img_{i}.png",
                             "mask_path": f"mask_{i}.png", "caption": f"object {i}"}))
manifest_path = root / "manifest.jsonl"
manifest_path.write_text("\n".join(lines) + "\n")

result = ingest(manifest_path)
print(f"ingested {len(result.manifest.entries)} entries, {len(result.rejects)} rejects")

schedule = NoiseSchedule.linear_beta(50)
summary = build_pairs(
    result.manifest,
    IdentityCodec(),
    analytic_gaussian_denoiser(schedule),
    schedule,
    out_dir=root / "pairs",
    run_seed=7,
    jobs=2,
)
print(f"built {len(summary.records)} pairs, skipped {len(summary.skipped)}")
for skip in summary.skipped:
    print(f"  skipped {skip['id']}: {skip['reason']}")
for record in summary.records:
    print(f"  record {record.id}: mode={record.mode} seed={record.seed} "
          f"stop={record.stop_frequency} codec={record.codec_id}")
print(f"outputs under {root / 'pairs'}")
