"""Command-line surface: synth, split, correct, fit, eval, init-weights.

Exit codes: 0 success, 1 partial or total runtime failure, 2 invalid
arguments (including missing input paths). Batch commands process files
concurrently (worker count capped by FLAREKIT_THREADS), tolerate
per-file failures, and write manifests/reports in deterministic sorted
order. The fit and eval report paths also render matplotlib figures
next to their CSV/JSONL outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cast import (
    CastConfig,
    WeightBundle,
    correct_image,
    encode,
    fit_codebook_kmeans,
    random_bundle,
    random_codebook,
)
from .color import hsv_to_rgb, rgb_to_hsv
from .fitting import FitConfig, fit_luts
from .imageio import load_mask, load_rgb, read_jsonl, save_mask, save_rgb, write_jsonl
from .luts import correct_hsv
from .metrics import LossWeights, compute_report
from .reporting import save_loss_trace_figure, save_metrics_figure
from .synthesis import FlareSample, SynthParams, jitter_params, split_scenes, synthesize

log = logging.getLogger("flarekit")


class UsageError(Exception):
    """Bad paths or option values detected after argument parsing."""


def _max_workers() -> int:
    env = os.environ.get("FLAREKIT_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _require(path: Path, kind: str) -> Path:
    if not path.exists():
        raise UsageError(f"{kind} path does not exist: {path}")
    return path


def _pngs(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def _frame_rng(seed: int, scene: str, frame: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{scene}:{frame}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    in_dir = _require(Path(args.in_dir), "input")
    out_dir = Path(args.out_dir)
    params = SynthParams()
    if args.params:
        params = SynthParams.from_dict(json.loads(Path(_require(Path(args.params), "params")).read_text()))
    if args.seed is not None:
        params = replace(params, seed=args.seed)

    scenes = sorted(d for d in in_dir.iterdir() if d.is_dir() and _pngs(d))
    if not scenes:
        log.error("no scenes found in %s", in_dir)
        return 1

    for sub in ("input", "gt", "mask"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    jobs = [
        (scene.name, frame.stem, frame)
        for scene in scenes
        for frame in _pngs(scene)
    ]

    def work(job):
        scene_id, frame_id, path = job
        try:
            gt = load_rgb(path)
            rng = _frame_rng(params.seed, scene_id, frame_id)
            p = jitter_params(params, args.jitter, rng)
            sample = synthesize(gt, p, scene_id=scene_id, frame_id=frame_id)
            if sample is None:
                return ("noflare", scene_id, frame_id, None)
            name = f"{scene_id}__{frame_id}.png"
            save_rgb(out_dir / "input" / name, sample.input)
            save_rgb(out_dir / "gt" / name, sample.gt)
            save_mask(out_dir / "mask" / name, sample.mask)
            record = {
                "scene_id": scene_id,
                "frame_id": frame_id,
                "input_path": f"input/{name}",
                "gt_path": f"gt/{name}",
                "mask_path": f"mask/{name}",
                "params": p.to_dict(),
                "split": None,
            }
            return ("ok", scene_id, frame_id, record)
        except Exception as exc:  # per-file tolerance
            return ("error", scene_id, frame_id, str(exc))

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = list(pool.map(work, jobs))

    records, failures, skipped = [], 0, 0
    for status, scene_id, frame_id, payload in sorted(
        results, key=lambda r: (r[1], r[2])
    ):
        if status == "ok":
            records.append(payload)
        elif status == "noflare":
            skipped += 1
            log.info("skipping %s/%s: no flare region", scene_id, frame_id)
        else:
            failures += 1
            log.error("failed %s/%s: %s", scene_id, frame_id, payload)

    write_jsonl(out_dir / "manifest.jsonl", records)
    log.info(
        "synthesized %d samples (%d skipped, %d failed) -> %s",
        len(records), skipped, failures, out_dir,
    )
    return 1 if failures else 0


# ---------------------------------------------------------------- split


def cmd_split(args) -> int:
    manifest = _require(Path(args.manifest), "manifest")
    records = read_jsonl(manifest)
    scenes: list[str] = []
    for rec in records:
        if rec["scene_id"] not in scenes:
            scenes.append(rec["scene_id"])
    assignment = split_scenes(scenes, args.seed)
    lookup = {s: name for name, ids in assignment.items() for s in ids}
    for rec in records:
        rec["split"] = lookup[rec["scene_id"]]
    write_jsonl(manifest, records)
    log.info(
        "split %d scenes: %d train / %d val / %d test",
        len(scenes), len(assignment["train"]), len(assignment["val"]), len(assignment["test"]),
    )
    return 0


# ---------------------------------------------------------------- correct


def _load_codebook(path: Path) -> np.ndarray:
    return WeightBundle.load(path).get("codebook")


def cmd_correct(args) -> int:
    src = _require(Path(args.in_path), "input")
    weights = WeightBundle.load(_require(Path(args.weights), "weights"))
    codebook = _load_codebook(_require(Path(args.codebook), "codebook"))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = [src] if src.is_file() else _pngs(src)
    if not paths:
        log.error("no PNG inputs under %s", src)
        return 1

    def work(path: Path):
        try:
            save_rgb(out_dir / path.name, correct_image(load_rgb(path), codebook, weights))
            return None
        except Exception as exc:
            return f"{path.name}: {exc}"

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        errors = [e for e in pool.map(work, paths) if e]
    for err in errors:
        log.error("failed %s", err)
    log.info("corrected %d/%d images -> %s", len(paths) - len(errors), len(paths), out_dir)
    return 1 if errors else 0


# ---------------------------------------------------------------- fit


def _fit_config(path: str | None) -> FitConfig:
    if not path:
        return FitConfig()
    d = json.loads(Path(_require(Path(path), "config")).read_text())
    weights = LossWeights(
        lambda_l1=d.pop("lambda_l1", 1.0),
        lambda_p=d.pop("lambda_p", 0.0),
        lambda_f=d.pop("lambda_f", 2.0),
        lambda_q=d.pop("lambda_q", 0.0),
    )
    return FitConfig(weights=weights, **d)


def cmd_fit(args) -> int:
    cfg = _fit_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pairs = []  # (name, input_path, gt_path, mask_path | None)
    if args.pair:
        inp, gt = (Path(p) for p in args.pair)
        _require(inp, "input"), _require(gt, "ground truth")
        pairs.append((inp.stem, inp, gt, None))
    else:
        manifest = _require(Path(args.manifest), "manifest")
        root = manifest.parent
        for rec in read_jsonl(manifest):
            pairs.append(
                (
                    f"{rec['scene_id']}__{rec['frame_id']}",
                    root / rec["input_path"],
                    root / rec["gt_path"],
                    root / rec["mask_path"] if rec.get("mask_path") else None,
                )
            )

    failures = 0
    for name, inp_path, gt_path, mask_path in pairs:
        try:
            degraded = load_rgb(inp_path)
            sample = FlareSample(
                input=degraded,
                gt=load_rgb(gt_path),
                mask=load_mask(mask_path) if mask_path else None,
                params=SynthParams(),
                scene_id=name,
                frame_id="",
            )
            result = fit_luts(sample, cfg)
            (out_dir / f"{name}.lut.json").write_text(result.bank.to_json())
            with open(out_dir / f"{name}.trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "loss", "step"])
                for it, loss in enumerate(result.loss_trace):
                    step = "" if it == 0 else repr(result.step_trace[it - 1])
                    writer.writerow([it, repr(loss), step])
            save_loss_trace_figure(result.loss_trace, out_dir / f"{name}.trace.png")
            corrected = hsv_to_rgb(correct_hsv(rgb_to_hsv(degraded), result.bank))
            save_rgb(out_dir / f"{name}.corrected.png", corrected)
            log.info(
                "fitted %s: loss %.6g -> %.6g in %d steps",
                name, result.loss_trace[0], result.loss_trace[-1], len(result.step_trace),
            )
        except Exception as exc:
            failures += 1
            log.error("fit failed for %s: %s", name, exc)
    return 1 if failures else 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    pred_dir = _require(Path(args.pred), "pred")
    gt_dir = _require(Path(args.gt), "gt")
    mask_dir = _require(Path(args.mask), "mask")
    input_dir = _require(Path(args.input), "input") if args.input else None
    out_path = Path(args.out)

    names = [p.name for p in _pngs(pred_dir)]
    skipped: list[str] = []
    jobs = []
    for name in names:
        gt_p = gt_dir / name
        mask_p = mask_dir / name
        in_p = input_dir / name if input_dir else None
        absent = [str(p) for p in (gt_p, mask_p, in_p) if p is not None and not p.exists()]
        if absent:
            skipped.append(name)
            for p in absent:
                log.error("missing counterpart for %s: %s", name, p)
            continue
        jobs.append((name, pred_dir / name, gt_p, mask_p, in_p))

    def work(job):
        name, pred_p, gt_p, mask_p, in_p = job
        report = compute_report(
            load_rgb(pred_p),
            load_rgb(gt_p),
            load_mask(mask_p),
            load_rgb(in_p) if in_p else None,
        )
        return name, report

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = sorted(pool.map(work, jobs), key=lambda r: r[0])

    records = []
    for name, report in results:
        rec = {"name": name, **report.to_dict()}
        if rec["psnr_f"] is None:
            log.warning("%s: empty flare mask, PSNR-F undefined (null)", name)
        if rec["psnr_nf"] is None:
            log.warning("%s: full flare mask, PSNR-NF undefined (null)", name)
        if rec["hae"] is None and input_dir is None:
            log.warning("%s: no --input directory, HAE not computed (null)", name)
        records.append(rec)

    aggregate = {"name": "__aggregate__", "count": len(records)}
    for key in ("psnr", "ssim", "psnr_f", "psnr_nf", "hae", "delta_e"):
        vals = [r[key] for r in records if r[key] is not None]
        aggregate[key] = float(np.mean(vals)) if vals else None
    write_jsonl(out_path, records + [aggregate])
    save_metrics_figure(records, out_path.with_suffix(".png"))
    log.info("evaluated %d samples (%d skipped) -> %s", len(records), len(skipped), out_path)
    return 1 if skipped else 0


# ---------------------------------------------------------------- init-weights


def cmd_init_weights(args) -> int:
    config = CastConfig()
    if args.config:
        config = CastConfig(**json.loads(Path(_require(Path(args.config), "config")).read_text()))
    bundle = random_bundle(config, args.seed)

    if args.images:
        if config.channels != config.codebook_dim:
            raise UsageError(
                "codebook_dim must equal encoder channels to fit a codebook from images"
            )
        feats = []
        for path in _pngs(_require(Path(args.images), "images")):
            hsv = rgb_to_hsv(load_rgb(path))
            for plane in (hsv[..., 0] / 360.0, hsv[..., 2]):
                fmap = encode(plane, bundle)
                feats.append(fmap.reshape(fmap.shape[0], -1).T)
        if not feats:
            log.error("no PNG images under %s", args.images)
            return 1
        codebook = fit_codebook_kmeans(
            np.concatenate(feats, axis=0), config.codebook_size, seed=args.seed
        )
    else:
        codebook = random_codebook(config, args.seed + 1)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle.with_tensors({"codebook": codebook}).save(out)
    log.info("wrote %d tensors -> %s", len(bundle.names()) + 1, out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flarekit",
        description="Purple-flare synthesis, LUT correction, fitting, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"flarekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize paired flare data from scene folders")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of scene subdirectories")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--params", help="JSON file of synthesis parameters")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jitter", type=float, default=0.0, help="fractional per-frame parameter jitter")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="assign scene-level train/val/test splits in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("correct", help="run the correction pipeline on images")
    p.add_argument("--in", dest="in_path", required=True, help="PNG file or directory")
    p.add_argument("--weights", required=True, help="NTC weight bundle")
    p.add_argument("--codebook", required=True, help="NTC file holding the 'codebook' tensor")
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("fit", help="fit LUT banks directly against ground truth")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pair", nargs=2, metavar=("INPUT", "GT"))
    group.add_argument("--manifest")
    p.add_argument("--config", help="JSON file of fit settings")
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--input", help="degraded inputs (enables HAE)")
    p.add_argument("--out", required=True, help="JSONL report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("init-weights", help="write a seeded random weight bundle + codebook")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of architecture sizes")
    p.add_argument("--out", required=True, help="output NTC path")
    p.add_argument("--images", help="PNG directory; fits the codebook by k-means over encoder features")
    p.set_defaults(func=cmd_init_weights)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error(str(exc))
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        log.error(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
