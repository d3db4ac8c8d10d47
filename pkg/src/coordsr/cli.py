"""Command-line entrypoint tying the pipeline together.

Subcommands: `simulate` (phantom/ingested datasets through the k-space
forward model), `train`, `eval`, `infer`, `sweep` (lambda ablations),
`export-study` (blinded reader-study pairs), and `serve` (reader-study
HTTP service). Exit codes: 0 success, 1 runtime failure, 2 usage/config
error.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, UsageError
from .metrics import MetricReport, MetricRow, bicubic_infer, evaluate_images, psnr, vif
from .mrisim import (
    PHANTOM_KINDS,
    DatasetManifest,
    build_manifest,
    load_image,
    make_coil_maps,
    make_phantom,
    save_image_ft1,
    save_image_png,
    simulate_measurement,
)
from .trainer import TrainConfig, infer as run_infer, train as run_train

IMAGE_SUFFIXES = (".png", ".ft1")


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    coil_maps = None

    entries = []
    if args.source:
        src = Path(args.source)
        files = sorted(p for p in src.rglob("*") if p.suffix in IMAGE_SUFFIXES)
        if not files:
            raise ConfigurationError(f"no .png/.ft1 images under {src}")
        for i, path in enumerate(files):
            img = load_image(path)
            if args.coils > 1:
                coil_maps = make_coil_maps(img.shape[0], args.coils, seed=args.seed)
            noisy = simulate_measurement(img, coil_maps, args.sigma_k, seed=args.seed ^ i)
            name = f"item_{i:03d}.ft1"
            save_image_ft1(images_dir / name, noisy)
            group = path.parent.name if path.parent != src else path.stem
            entries.append((f"images/{name}", group))
        source = "ingested"
    else:
        if args.coils > 1:
            coil_maps = make_coil_maps(args.n, args.coils, seed=args.seed)
        for i in range(args.count):
            clean = make_phantom(args.kind, args.n, seed=args.seed ^ i)
            noisy = simulate_measurement(clean, coil_maps, args.sigma_k,
                                         seed=(args.seed ^ i) + 0x5EED)
            name = f"item_{i:03d}.ft1"
            save_image_ft1(images_dir / name, noisy)
            entries.append((f"images/{name}", f"item_{i:03d}"))
        source = "phantom"

    manifest = build_manifest(entries, seed=args.seed, sigma_k=args.sigma_k, source=source)
    manifest.save(out / "manifest.json")
    counts = {s: len(manifest.split_items(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(entries)} images to {out} (splits {counts})")
    return 0


def _train_flag_overrides(args) -> dict:
    mapping = {
        "model": args.model,
        "steps": args.steps,
        "seed": args.seed,
        "reg_lambda": args.reg_lambda,
        "sigma": args.sigma,
        "denoiser": args.denoiser,
        "tile_hr": args.tile,
        "batch": args.batch,
        "lr": args.lr,
        "eval_every": args.eval_every,
        "eval_points": args.eval_points,
        "d": args.d,
        "blocks": args.blocks,
        "mlp_layers": args.mlp_layers,
        "hidden": args.hidden,
        "scale_range": tuple(args.scale_range) if args.scale_range else None,
        "liif_mode": True if args.liif else None,
        "record_timing": True if args.record_timing else None,
    }
    return {k: v for k, v in mapping.items() if v is not None}


def _resolve_train_config(args) -> TrainConfig:
    merged = TrainConfig().to_dict()
    overrides = _train_flag_overrides(args)
    merged.update(overrides)
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        for key in sorted(set(file_cfg) & set(overrides)):
            if file_cfg[key] != overrides[key]:
                print(f"warning: config file overrides flag for {key!r}", file=sys.stderr)
        merged.update(file_cfg)
    return TrainConfig.from_dict(merged)


def _cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    data_dir = Path(args.data)
    manifest = DatasetManifest.load(data_dir / "manifest.json")
    result = run_train(manifest, cfg, args.out, data_dir)
    print(f"trained {cfg.resolved_steps()} steps; best step {result.best_step} "
          f"(val PSNR {result.best_val_psnr:.3f} dB); run dir {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    base = _resolve_train_config(args)
    out = Path(args.out)
    index = []
    for lam in args.lambdas:
        cfg = TrainConfig.from_dict({**base.to_dict(), "reg_lambda": lam})
        run_dir = out / f"lambda_{lam:g}"
        result = run_train_from(cfg, args.data, run_dir)
        index.append({"reg_lambda": lam, "run_dir": str(run_dir),
                      "best_step": result.best_step})
        print(f"lambda={lam:g}: best step {result.best_step}")
    (out / "sweep.json").write_text(json.dumps(index, indent=2) + "\n")
    return 0


def run_train_from(cfg: TrainConfig, data_dir, out_dir):
    data_dir = Path(data_dir)
    manifest = DatasetManifest.load(data_dir / "manifest.json")
    return run_train(manifest, cfg, out_dir, data_dir)


def _split_images(data_dir: Path, split: str) -> dict[str, np.ndarray]:
    manifest = DatasetManifest.load(data_dir / "manifest.json")
    items = manifest.split_items(split)
    if not items:
        raise ConfigurationError(f"split {split!r} is empty")
    return {Path(it.path).stem: load_image(data_dir / it.path) for it in items}


def _cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    images = _split_images(Path(args.data), args.split)
    config = {"scale": args.scale, "checkpoint": str(ckpt), "split": args.split}
    report = evaluate_images(lambda x, dims: run_infer(ckpt, x, dims),
                             images, args.scale, config)
    if args.with_bicubic:
        bic = evaluate_images(bicubic_infer, images, args.scale)
        rows = list(report.rows)
        rows += [MetricRow(f"bicubic/{r.item}", r.psnr_db, r.vif) for r in bic.rows]
        rows.append(MetricRow("bicubic_mean", bic.mean_psnr(), bic.mean_vif()))
        report = MetricReport(rows=rows, config=config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_csv())
    if args.json:
        Path(args.json).write_text(report.to_json())
    print(f"mean PSNR {_mean_of(report, 'psnr'):.3f} dB, "
          f"mean VIF {_mean_of(report, 'vif'):.4f}; wrote {out}")
    return 0


def _mean_of(report: MetricReport, which: str) -> float:
    rows = [r for r in report.rows if not r.item.startswith("bicubic")]
    vals = [r.psnr_db if which == "psnr" else r.vif for r in rows]
    return float(np.mean(vals))


def _cmd_infer(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    img = load_image(args.input)
    if args.dims:
        dims = tuple(args.dims)
    else:
        dims = (int(round(img.shape[0] * args.scale)), int(round(img.shape[1] * args.scale)))
    out_img = run_infer(ckpt, img, dims)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".png":
        save_image_png(out, out_img)
    else:
        save_image_ft1(out, out_img)
    print(f"wrote {out_img.shape[0]}x{out_img.shape[1]} image to {out}")
    return 0


def _cmd_export_study(args) -> int:
    for label, path in (("a", args.checkpoint_a), ("b", args.checkpoint_b)):
        if not Path(path).exists():
            raise FileNotFoundError(f"checkpoint {label} not found: {path}")
    images = _split_images(Path(args.data), args.split)
    names = sorted(images)
    if args.count:
        names = names[: args.count]

    # Inference on the ground truth itself (no downsampling) at the given
    # scale; render everything before writing so failures leave no output.
    rendered = []
    for name in names:
        img = images[name]
        dims = (int(round(img.shape[0] * args.scale)), int(round(img.shape[1] * args.scale)))
        out_a = run_infer(Path(args.checkpoint_a), img, dims)
        out_b = run_infer(Path(args.checkpoint_b), img, dims)
        rendered.append((name, out_a, out_b))

    rng = np.random.default_rng(args.seed)
    flips = [int(rng.integers(2)) for _ in rendered]

    out = Path(args.out)
    pairs_dir = out / "pairs"
    try:
        pairs_dir.mkdir(parents=True, exist_ok=True)
        pairs = []
        key = {"methods": {"a": str(args.checkpoint_a), "b": str(args.checkpoint_b)},
               "pairs": {}}
        for i, ((name, out_a, out_b), flip) in enumerate(zip(rendered, flips)):
            pid = f"p{i:03d}"
            left, right = (out_a, out_b) if flip == 0 else (out_b, out_a)
            save_image_png(pairs_dir / f"{pid}_left.png", left)
            save_image_png(pairs_dir / f"{pid}_right.png", right)
            pairs.append({"id": pid,
                          "left_url": f"/pairs/{pid}_left.png",
                          "right_url": f"/pairs/{pid}_right.png"})
            key["pairs"][pid] = {"item": name,
                                 "left": "a" if flip == 0 else "b",
                                 "right": "b" if flip == 0 else "a"}
        study = {
            "study_id": args.study_id,
            "seed": args.seed,
            "scale": args.scale,
            "pairs": pairs,
            "anchors": {
                "sharpness": "1 = left much sharper ... 5 = right much sharper",
                "noise": "1 = left much less noisy ... 5 = right much less noisy",
            },
        }
        (out / "study.json").write_text(json.dumps(study, indent=2) + "\n")
        (out / "key.json").write_text(json.dumps(key, indent=2, sort_keys=True) + "\n")
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    print(f"exported {len(rendered)} blinded pairs to {out} (key: {out / 'key.json'})")
    return 0


def _cmd_serve(args) -> int:
    from . import study_service

    study_service.serve(args.study_dir, args.key_file, args.ui_dir,
                        host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordsr",
        description="Scale-agnostic super-resolution for MR-like images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a noisy dataset + manifest")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="texture")
    p.add_argument("--n", type=int, default=128, help="phantom side length")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--sigma-k", type=float, default=0.03,
                   help="k-space noise std per component")
    p.add_argument("--coils", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", help="ingest .png/.ft1 images from this directory instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train a model from a dataset manifest")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="train once per lambda value")
    _add_train_flags(p)
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 1.0, 10.0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--with-bicubic", action="store_true")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="super-resolve one image with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--dims", type=int, nargs=2, help="explicit output dims H W")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("export-study", help="render blinded A/B pairs for a reader study")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, help="cap the number of pairs")
    p.add_argument("--study-id", default="study")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_study)

    p = sub.add_parser("serve", help="serve a reader study over HTTP")
    p.add_argument("--study-dir", required=True)
    p.add_argument("--key-file")
    p.add_argument("--ui-dir", help="static UI bundle directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config; wins over flags on conflict")
    p.add_argument("--data", required=True, help="dataset directory with manifest.json")
    p.add_argument("--model", choices=("coord", "conv"))
    p.add_argument("--scale-range", type=float, nargs=2, metavar=("SMIN", "SMAX"))
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--denoiser", choices=("block-dct", "gaussian", "identity"))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tile", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--eval-points", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--mlp-layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--liif", action="store_true", default=None)
    p.add_argument("--record-timing", action="store_true", default=None)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, UsageError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
