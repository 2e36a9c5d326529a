"""Command-line entry point for batch and single-sample use.

Parameters resolve in three layers: built-in defaults, then a config file
(INI-style key=value sections, one section per command), then flags, which
always win. Every command echoes its effective configuration into its run
summary so a run is reproducible from the summary alone.

Exit codes: 0 success, 1 partial failure (some entries skipped), 2 fatal.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bridge, evalkit, pipeline
from .bridge import FrameDecoder, FramingError, MsgType, Session, frame_message, load_tensor, save_tensor
from .refine import refine as run_refine
from .ddim import NoiseSchedule, analytic_gaussian_denoiser, zero_denoiser
from .lattice import LatentGrid
from .maskops import BinaryMask, load_mask, resample_to_latent, save_mask
from .perturb import PerturbMode, perturb_initial_noise
from .pipeline import get_codec, ingest, load_image, save_image

__all__ = ["main"]

_DEFAULTS = {
    "make-pairs": {
        "codec": "identity", "denoiser": "gaussian", "backend": "", "steps": 50,
        "mode": "high_only", "stop_freq": 0.3, "seed": 0, "jobs": os.cpu_count() or 1,
        "save_noise": False,
    },
    "perturb": {"mode": "high_only", "stop_freq": 0.3, "seed": 0},
    "invert": {"codec": "identity", "denoiser": "gaussian", "backend": "", "steps": 50, "caption": ""},
    "sample": {"codec": "identity", "denoiser": "gaussian", "backend": "", "steps": 50, "caption": ""},
    "refine": {
        "k": 2, "operator": "roundtrip", "codec": "identity", "denoiser": "gaussian",
        "backend": "", "steps": 20,
    },
    "eval-region": {"metric": "mse", "rect_margin": 0, "backend": ""},
    "assemble-train": {"codec": "identity", "steps": 50, "seed": 0, "augment": ""},
    "protocol-selftest": {"cases": 1000, "connect": ""},
}

_INT_KEYS = {"steps", "seed", "jobs", "k", "rect_margin", "dilate_radius", "cases"}
_FLOAT_KEYS = {"stop_freq"}
_BOOL_KEYS = {"save_noise"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisepair",
        description="Pseudo-pair synthesis via frequency-separated perturbation of diffusion initial noise.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; one [section] per command")
    common.add_argument("--json", action="store_true", help="print a machine-readable run summary to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add_parser("make-pairs", "build pseudo pairs for a whole manifest")
    p.add_argument("--manifest", required=True, help="JSON-lines dataset manifest")
    p.add_argument("--out", required=True, help="output directory for pairs and reports")
    p.add_argument("--codec", choices=["identity", "avgpool4"], help="built-in latent codec")
    p.add_argument("--denoiser", choices=["zero", "gaussian"], help="built-in analytic denoiser")
    p.add_argument("--backend", help="HOST:PORT of a bridge backend (overrides --denoiser)")
    p.add_argument("--steps", type=int, help="inversion/sampling steps (default 50)")
    p.add_argument("--mode", choices=[m.value for m in PerturbMode], help="perturbation mode")
    p.add_argument("--stop-freq", type=float, dest="stop_freq", help="low-pass stop frequency (default 0.3)")
    p.add_argument("--seed", type=int, help="run seed; per-entry seeds derive from it")
    p.add_argument("--jobs", type=int, help="worker threads (default: logical cores)")
    p.add_argument("--save-noise", action="store_const", const=True, dest="save_noise",
                   help="also write perturbed initial noise tensors")

    p = add_parser("perturb", "perturb one initial-noise tensor inside a mask")
    p.add_argument("--latent", required=True, help="input tensor file (TensorWire)")
    p.add_argument("--mask", required=True, help="mask PNG; resampled to latent resolution if needed")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--mode", choices=[m.value for m in PerturbMode])
    p.add_argument("--stop-freq", type=float, dest="stop_freq")
    p.add_argument("--seed", type=int)

    for name, help_text in (("invert", "invert an image to its initial noise"),
                            ("sample", "sample an image from initial noise")):
        p = add_parser(name, help_text)
        if name == "invert":
            p.add_argument("--image", required=True, help="input image PNG")
            p.add_argument("--out", required=True, help="output tensor file (z_T)")
            p.add_argument("--save-trajectory", help="directory for per-step tensors")
        else:
            p.add_argument("--latent", required=True, help="input tensor file (z_T)")
            p.add_argument("--out", required=True, help="output image PNG")
        p.add_argument("--codec", choices=["identity", "avgpool4"])
        p.add_argument("--denoiser", choices=["zero", "gaussian"])
        p.add_argument("--backend", help="HOST:PORT of a bridge backend")
        p.add_argument("--steps", type=int)
        p.add_argument("--caption", help="conditioning caption (token is derived from it)")

    p = add_parser("refine", "iteratively refine a swap result")
    p.add_argument("--reference", required=True, help="reference image PNG")
    p.add_argument("--source", required=True, help="source image PNG")
    p.add_argument("--mask", required=True, help="source object mask PNG")
    p.add_argument("--out", required=True, help="output image PNG")
    p.add_argument("--k", type=int, help="refinement rounds (default 2)")
    p.add_argument("--operator", choices=["identity", "roundtrip"],
                   help="swap operator: identity passthrough or invert+resample round trip")
    p.add_argument("--codec", choices=["identity", "avgpool4"])
    p.add_argument("--denoiser", choices=["zero", "gaussian"])
    p.add_argument("--backend", help="HOST:PORT of a bridge backend")
    p.add_argument("--steps", type=int, help="diffusion steps per round (default 20)")
    p.add_argument("--keep-intermediates", dest="keep_intermediates",
                   help="directory for per-round outputs")

    p = add_parser("eval-region", "boundary-region distance between source and result")
    p.add_argument("--source", required=True, help="source image PNG")
    p.add_argument("--result", required=True, help="generated image PNG")
    p.add_argument("--mask", required=True, help="fine object mask PNG")
    p.add_argument("--id", default="pair", help="row id for the report")
    p.add_argument("--metric", help="mse, ssim, or a bridge metric id")
    p.add_argument("--dilate-radius", type=int, dest="dilate_radius", help="mask dilation radius")
    p.add_argument("--rect-margin", type=int, dest="rect_margin", help="rectangle margin")
    p.add_argument("--backend", help="HOST:PORT for bridge metrics")
    p.add_argument("--out-csv", dest="out_csv", help="write a CSV report")
    p.add_argument("--out-json", dest="out_json", help="write a JSON report")

    p = add_parser("assemble-train", "assemble training samples from pair records")
    p.add_argument("--pairs", required=True, help="pairs.jsonl from make-pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--codec", choices=["identity", "avgpool4"])
    p.add_argument("--steps", type=int, help="training timestep range 0..steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--augment", help="comma-separated ops: blur,zoom,perspective,elastic")

    p = add_parser("protocol-selftest", "verify wire framing and, optionally, a live backend")
    p.add_argument("--cases", type=int, help="fuzz round-trip case count")
    p.add_argument("--connect", help="HOST:PORT of a backend to probe")

    return parser


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Defaults < config file section < explicit flags."""
    effective = dict(_DEFAULTS.get(command, {}))
    if args.config:
        ini = configparser.ConfigParser()
        read = ini.read(args.config)
        if not read:
            raise FileNotFoundError(f"config file {args.config!r} not found")
        if ini.has_section(command):
            for key, raw in ini.items(command):
                key = key.replace("-", "_")
                if key in _INT_KEYS:
                    effective[key] = int(raw)
                elif key in _FLOAT_KEYS:
                    effective[key] = float(raw)
                elif key in _BOOL_KEYS:
                    effective[key] = raw.strip().lower() in ("1", "true", "yes", "on")
                else:
                    effective[key] = raw
    for key, value in vars(args).items():
        if key in ("config", "json", "command"):
            continue
        if value is not None:
            effective[key] = value
    effective["command"] = command
    return effective


def _make_denoiser(cfg: dict, schedule: NoiseSchedule):
    if cfg.get("backend"):
        host, _, port = cfg["backend"].rpartition(":")
        session = Session.connect_tcp(host or "127.0.0.1", int(port))
        return bridge.RemoteDenoiser(session)
    if cfg.get("denoiser") == "zero":
        return zero_denoiser()
    return analytic_gaussian_denoiser(schedule)


def _load_latent(path: str) -> LatentGrid:
    return LatentGrid(load_tensor(path).astype(np.float64))


def _mask_for_latent(path: str, z: LatentGrid) -> BinaryMask:
    mask = load_mask(path)
    if (mask.height, mask.width) != (z.height, z.width):
        mask = resample_to_latent(mask, z.height, z.width)
    return mask


def _cmd_make_pairs(cfg: dict) -> tuple[int, dict]:
    schedule = NoiseSchedule.linear_beta(cfg["steps"])
    codec = get_codec(cfg["codec"])
    denoiser = _make_denoiser(cfg, schedule)
    result = ingest(cfg["manifest"])
    summary = pipeline.build_pairs(
        result.manifest,
        codec,
        denoiser,
        schedule,
        out_dir=cfg["out"],
        run_seed=cfg["seed"],
        mode=cfg["mode"],
        stop_frequency=cfg["stop_freq"],
        jobs=cfg["jobs"],
        save_noise=bool(cfg.get("save_noise")),
    )
    payload = {
        "config": _json_safe(cfg),
        "ingest_rejects": list(result.rejects),
        "built": len(summary.records),
        "skipped": summary.skipped,
        "out": str(Path(cfg["out"]) / "pairs.jsonl"),
    }
    (Path(cfg["out"]) / "run.json").write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return (0 if summary.ok else 1), payload


def _cmd_perturb(cfg: dict) -> tuple[int, dict]:
    z = _load_latent(cfg["latent"])
    mask = _mask_for_latent(cfg["mask"], z)
    out = perturb_initial_noise(z, mask, mode=cfg["mode"], seed=cfg["seed"],
                                stop_frequency=cfg["stop_freq"])
    save_tensor(out.data, cfg["out"])
    return 0, {"config": _json_safe(cfg), "out": cfg["out"], "shape": list(out.shape)}


def _cmd_invert(cfg: dict) -> tuple[int, dict]:
    from .ddim import ConditioningRef, ddim_invert
    from .pipeline import caption_token

    schedule = NoiseSchedule.linear_beta(cfg["steps"])
    codec = get_codec(cfg["codec"])
    denoiser = _make_denoiser(cfg, schedule)
    z0 = codec.encode(load_image(cfg["image"]))
    trajectory = ddim_invert(z0, denoiser, schedule, ConditioningRef(caption_token(cfg["caption"])))
    save_tensor(trajectory[-1].data, cfg["out"])
    if cfg.get("save_trajectory"):
        traj_dir = Path(cfg["save_trajectory"])
        traj_dir.mkdir(parents=True, exist_ok=True)
        for t, z in enumerate(trajectory):
            save_tensor(z.data, traj_dir / f"z_{t:04d}.twr")
    return 0, {"config": _json_safe(cfg), "out": cfg["out"], "steps": schedule.steps}


def _cmd_sample(cfg: dict) -> tuple[int, dict]:
    from .ddim import ConditioningRef, ddim_sample
    from .pipeline import caption_token

    schedule = NoiseSchedule.linear_beta(cfg["steps"])
    codec = get_codec(cfg["codec"])
    denoiser = _make_denoiser(cfg, schedule)
    z_T = _load_latent(cfg["latent"])
    image = codec.decode(ddim_sample(z_T, denoiser, schedule, ConditioningRef(caption_token(cfg["caption"]))))
    save_image(image, cfg["out"])
    return 0, {"config": _json_safe(cfg), "out": cfg["out"]}


class _IdentityOperator:
    def apply(self, reference, source, mask):
        return np.asarray(source).copy()


class _RoundTripOperator:
    """Invert the source to initial noise and sample straight back.

    Ignores the reference (a trained cross-object backend is external); it
    exercises the refinement loop, codec round trips and their accumulated
    artifacts with built-in parts only.
    """

    def __init__(self, codec, denoiser, schedule):
        self.codec = codec
        self.denoiser = denoiser
        self.schedule = schedule

    def apply(self, reference, source, mask):
        from .ddim import ddim_invert, ddim_sample

        z0 = self.codec.encode(np.asarray(source))
        z_T = ddim_invert(z0, self.denoiser, self.schedule)[-1]
        return np.clip(self.codec.decode(ddim_sample(z_T, self.denoiser, self.schedule)), 0.0, 1.0)


def _cmd_refine(cfg: dict) -> tuple[int, dict]:
    schedule = NoiseSchedule.linear_beta(cfg["steps"])
    codec = get_codec(cfg["codec"])
    if cfg["operator"] == "identity":
        op = _IdentityOperator()
    else:
        op = _RoundTripOperator(codec, _make_denoiser(cfg, schedule), schedule)
    reference = load_image(cfg["reference"])
    source = load_image(cfg["source"])
    mask = load_mask(cfg["mask"])
    result = run_refine(op, reference, source, mask, rounds=cfg["k"],
                        keep_intermediates=bool(cfg.get("keep_intermediates")))
    save_image(result.output, cfg["out"])
    if cfg.get("keep_intermediates"):
        inter_dir = Path(cfg["keep_intermediates"])
        inter_dir.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(result.intermediates, start=1):
            save_image(img, inter_dir / f"round_{i}.png")
    return 0, {
        "config": _json_safe(cfg),
        "out": cfg["out"],
        "rounds": cfg["k"],
        "round_seconds": result.round_seconds,
    }


def _cmd_eval_region(cfg: dict) -> tuple[int, dict]:
    source = load_image(cfg["source"])
    result = load_image(cfg["result"])
    mask = load_mask(cfg["mask"])
    session = None
    if cfg.get("backend") and cfg["metric"] not in ("mse", "ssim"):
        host, _, port = cfg["backend"].rpartition(":")
        session = Session.connect_tcp(host or "127.0.0.1", int(port))
    value = evalkit.region_metric(
        source, result, mask,
        metric=cfg["metric"],
        dilate_radius=cfg.get("dilate_radius"),
        rect_margin=cfg["rect_margin"],
        session=session,
    )
    from .maskops import boundary_region, default_boundary_dilate_radius

    radius = cfg.get("dilate_radius")
    if radius is None:
        radius = default_boundary_dilate_radius(mask.height, mask.width)
    region = boundary_region(mask, radius, cfg["rect_margin"])
    row = evalkit.EvalRow(cfg["id"], region.popcount, value, cfg["metric"])
    report = evalkit.emit_report([row], csv_path=cfg.get("out_csv"), json_path=cfg.get("out_json"))
    return 0, {"config": _json_safe(cfg), "value": value, "region_pixels": region.popcount,
               "mean": report.mean}


def _cmd_assemble_train(cfg: dict) -> tuple[int, dict]:
    from .pipeline import PairRecord, assemble_training_sample

    schedule = NoiseSchedule.linear_beta(cfg["steps"])
    codec = get_codec(cfg["codec"])
    ops = [s for s in (cfg["augment"] or "").split(",") if s]
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, skipped = [], []
    with open(cfg["pairs"], "r", encoding="utf-8") as fh:
        records = [PairRecord.from_json(line) for line in fh if line.strip()]
    for record in records:
        seed = pipeline.derive_entry_seed(cfg["seed"], record.id)
        try:
            sample = assemble_training_sample(record, schedule, seed, codec, augment_ops=ops)
        except Exception as exc:
            skipped.append({"id": record.id, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        crop_path = out_dir / f"{record.id}_ref.png"
        save_image(np.clip(sample.reference_crop, 0.0, 1.0), crop_path)
        box_path = out_dir / f"{record.id}_box.png"
        save_mask(sample.box_mask, box_path)
        latent_path = out_dir / f"{record.id}_noisy.twr"
        save_tensor(sample.noisy_latent.data, latent_path)
        rows.append({
            "pair_id": sample.pair_id,
            "reference_crop_path": str(crop_path),
            "reference_timestep": sample.reference_timestep,
            "timestep": sample.timestep,
            "noise_seed": sample.noise_seed,
            "noisy_latent_path": str(latent_path),
            "box_mask_path": str(box_path),
            "condition_path": sample.condition_path,
            "target_path": sample.target_path,
        })
    with open(out_dir / "train.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    payload = {"config": _json_safe(cfg), "assembled": len(rows), "skipped": skipped,
               "out": str(out_dir / "train.jsonl")}
    (out_dir / "run.json").write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return (0 if not skipped else 1), payload


def _cmd_protocol_selftest(cfg: dict) -> tuple[int, dict]:
    rng = np.random.Generator(np.random.PCG64(0))
    cases = int(cfg["cases"])
    for _ in range(cases):
        msg_type = int(rng.integers(1, 12))
        payload = rng.integers(0, 256, size=int(rng.integers(0, 64)), dtype=np.uint8).tobytes()
        decoder = FrameDecoder()
        msgs = decoder.feed(frame_message(msg_type, payload))
        assert len(msgs) == 1 and msgs[0].msg_type == msg_type and msgs[0].payload == payload
    golden = frame_message(MsgType.HELLO, b"")
    assert golden == bytes([0x53, 0x53, 0x57, 0x50, 1, 0, 10] + [0] * 8)
    probe = {}
    if cfg.get("connect"):
        host, _, port = cfg["connect"].rpartition(":")
        session = Session.connect_tcp(host or "127.0.0.1", int(port))
        probe["caps"] = session.capabilities.get("caps", [])
        if "denoise" in probe["caps"]:
            z = LatentGrid(np.zeros((1, 2, 2)))
            probe["denoise_shape_ok"] = session.denoise(z, 0).shape == z.shape
        session.close()
    return 0, {"config": _json_safe(cfg), "framing_cases": cases, "golden_ok": True, **probe}


def _json_safe(cfg: dict) -> dict:
    return {k: (v.value if isinstance(v, PerturbMode) else v) for k, v in cfg.items()}


_COMMANDS = {
    "make-pairs": _cmd_make_pairs,
    "perturb": _cmd_perturb,
    "invert": _cmd_invert,
    "sample": _cmd_sample,
    "refine": _cmd_refine,
    "eval-region": _cmd_eval_region,
    "assemble-train": _cmd_assemble_train,
    "protocol-selftest": _cmd_protocol_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args, args.command)
        code, payload = _COMMANDS[args.command](cfg)
    except (FramingError, bridge.BridgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        brief = {k: v for k, v in payload.items() if k != "config"}
        print(json.dumps(brief, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
