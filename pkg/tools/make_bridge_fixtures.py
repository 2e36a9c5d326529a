#!/usr/bin/env python3
"""Regenerate the shared bridge protocol fixtures under fixtures/bridge/.

These files pin the wire format for every implementation of the protocol:
  hello_frame.bin            -- HELLO frame with empty payload
  denoise_req_1x2x2_t10_c0.bin -- DENOISE_REQ for a 1x2x2 zero tensor, t=10, cond=0
  gaussian_oracle_cases.json -- schedule + 100 random tensors with expected
                                noise predictions from the analytic oracle

Deterministic: rerunning must produce byte-identical output.
"""

from __future__ import annotations

import json
import struct
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from noisepair.bridge import MsgType, encode_tensor, frame_message
from noisepair.ddim import NoiseSchedule, analytic_gaussian_denoiser
from noisepair.lattice import LatentGrid

OUT_DIR = Path(__file__).resolve().parents[1] / "fixtures" / "bridge"


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)

    (OUT_DIR / "hello_frame.bin").write_bytes(frame_message(MsgType.HELLO, b""))

    z = np.zeros((1, 2, 2), dtype=np.float32)
    payload = encode_tensor(z) + struct.pack("<IQ", 10, 0)
    (OUT_DIR / "denoise_req_1x2x2_t10_c0.bin").write_bytes(
        frame_message(MsgType.DENOISE_REQ, payload)
    )

    schedule = NoiseSchedule.linear_beta(50)
    oracle = analytic_gaussian_denoiser(schedule)
    rng = np.random.Generator(np.random.PCG64(2024))
    cases = []
    for i in range(100):
        t = int(rng.integers(0, schedule.steps + 1))
        shape = (int(rng.integers(1, 4)), int(rng.integers(2, 9)), int(rng.integers(2, 9)))
        # float32 values so every implementation decodes the exact same input
        data = rng.standard_normal(shape).astype(np.float32)
        expected = oracle.predict(LatentGrid(data.astype(np.float64)), t, None)
        cases.append(
            {
                "t": t,
                "shape": list(shape),
                "input": [float(v) for v in data.ravel()],
                "expected": [float(v) for v in expected.data.ravel()],
            }
        )
    doc = {
        "schedule": {
            "kind": "linear_beta",
            "beta_start": 8.5e-4,
            "beta_end": 1.2e-2,
            "train_steps": 1000,
            "steps": 50,
            "alpha_bar": [float(v) for v in schedule.alpha_bar],
        },
        "tolerance": 1e-6,
        "cases": cases,
    }
    (OUT_DIR / "gaussian_oracle_cases.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote fixtures to {OUT_DIR}")


if __name__ == "__main__":
    main()
