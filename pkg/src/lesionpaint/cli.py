"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, resolve
from .errors import LesionPaintError, MaskValidationError, ShapeError
from .volume import MaskVolume, MultiContrastVolume, Orientation, Volume, reorient

log = logging.getLogger("lesionpaint")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- helpers

def _named_paths(items, flag: str) -> dict[str, Path]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{flag} expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        out[name] = Path(path)
    return out


def _existing(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_image(path) -> Volume:
    from .nifti import read_nifti

    v = read_nifti(_existing(path, "image"), as_mask=False)
    return v


def _read_mask(path) -> MaskVolume:
    from .nifti import read_nifti

    m = read_nifti(_existing(path, "mask"), as_mask=True)
    return m


def _write_provenance(out_dir: Path, command: str, cfg: dict, inputs: dict, outputs: list[str], extra=None):
    record = {
        "tool": "lesionpaint",
        "version": __version__,
        "command": command,
        "seed": cfg.get("seed"),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }
    if extra:
        record.update(extra)
    path = out_dir / "provenance.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def _schedule(cfg):
    from .schedule import build_cosine_schedule

    return build_cosine_schedule(int(cfg["schedule.T"]), float(cfg["schedule.s"]))


def _sampler_config(cfg):
    from .sampler import SamplerConfig

    clip = cfg["engine.x0_clip"]
    return SamplerConfig.from_stride(int(cfg["schedule.T"]), int(cfg["engine.ddim_stride"]),
                                     cfg["engine.truncation_tau"], int(cfg["engine.repaint_repeats"]),
                                     int(cfg["seed"]), None if clip in (None, 0) else float(clip))


def _load_inputs(args, names_hint=None) -> tuple[MultiContrastVolume, dict]:
    images = _named_paths(args.image, "--image")
    if not images:
        raise UsageError("at least one --image NAME=PATH is required")
    vols = {name: _read_image(p) for name, p in images.items()}
    order = list(names_hint) if names_hint else list(vols)
    missing_given = [n for n in vols if n not in order]
    if missing_given:
        raise UsageError(f"contrast(s) {missing_given} not known to the model (expects {order})")
    ref = next(iter(vols.values()))
    arrays = {}
    for name in order:
        v = vols.get(name)
        if v is not None and v.shape != ref.shape:
            raise UsageError(f"--image {name} shape {v.shape} differs from {ref.shape}")
        arrays[name] = None if v is None else v.data
    mcv = MultiContrastVolume.from_arrays(arrays, ref.spacing)
    return mcv, {f"image:{k}": v for k, v in images.items()}


def _denoiser(args, cfg, volume: MultiContrastVolume | None = None, repaint=None):
    """Network denoiser from ``--checkpoint`` or the analytic Gaussian oracle."""
    from .denoiser import GaussianPosteriorDenoiser, load_checkpoint, NetworkDenoiser

    if getattr(args, "checkpoint", None):
        model, meta = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
        from .schedule import build_cosine_schedule

        sched = build_cosine_schedule(int(meta.get("T", cfg["schedule.T"])), float(meta.get("s", cfg["schedule.s"])))
        cfg["schedule.T"], cfg["schedule.s"] = sched.T, sched.s
        return NetworkDenoiser(model, sched), meta.get("contrasts")
    if getattr(args, "analytic_oracle", False):
        sched = _schedule(cfg)
        if volume is None:
            return GaussianPosteriorDenoiser(sched), None
        # per-contrast prior fitted to the normalized voxels outside the repaint region
        norm = volume.normalized(cfg["normalize.p_low"], cfg["normalize.p_high"]).stack()
        keep = ~np.asarray(repaint, bool) if repaint is not None else np.ones(volume.shape, bool)
        if not keep.any():
            keep = np.ones(volume.shape, bool)
        mean = np.array([c[keep].mean() for c in norm])
        std = np.array([c[keep].std() for c in norm])
        return GaussianPosteriorDenoiser(sched, mean, std), None
    raise UsageError("either --checkpoint or --analytic-oracle is required")


def _write_outputs(out_dir: Path, volume: MultiContrastVolume, prefix: str) -> list[str]:
    from .nifti import write_nifti

    written = []
    for name, vol, present in zip(volume.names, volume.volumes, volume.presence):
        if not present:
            continue
        p = out_dir / f"{prefix}_{name}.nii"
        write_nifti(p, vol)
        written.append(p.name)
    return written


def _engine_run(args, cfg, target: MaskVolume, repaint: MaskVolume, task: str, extra_inputs: dict) -> int:
    from .pipeline import inpaint
    from .sampler import RepaintMasks

    ckpt_contrasts = None
    if getattr(args, "checkpoint", None):
        _, ckpt_contrasts = _denoiser(args, cfg)
    volume, inputs = _load_inputs(args, ckpt_contrasts)
    inputs.update(extra_inputs)
    if target.shape != volume.shape or repaint.shape != volume.shape:
        raise UsageError(f"mask shape {target.shape} does not match image shape {volume.shape}")
    denoiser, _ = _denoiser(args, cfg, volume, repaint.data)
    masks = RepaintMasks(target, repaint)
    scfg = _sampler_config(cfg)
    out = inpaint(volume, masks, scfg, denoiser, views=cfg["views"],
                  p_low=cfg["normalize.p_low"], p_high=cfg["normalize.p_high"])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_outputs(out_dir, out, task)
    extra = {}
    if getattr(args, "reference", None):
        extra["metrics"] = _fill_metrics(args, out)
        (out_dir / "metrics.json").write_text(json.dumps(extra["metrics"], indent=2, sort_keys=True) + "\n")
        outputs.append("metrics.json")
    _write_provenance(out_dir, task, cfg, inputs, outputs, extra)
    print(json.dumps({"task": task, "outputs": sorted(outputs), "out_dir": str(out_dir)}, sort_keys=True))
    return EXIT_OK


def _fill_metrics(args, out: MultiContrastVolume) -> dict:
    from .phantom import nawm_mean_fill, rmse_in_mask

    refs = _named_paths(args.reference, "--reference")
    if not args.nawm_mask:
        raise UsageError("--reference requires --nawm-mask")
    lesion = _read_mask(args.mask)
    nawm = _read_mask(args.nawm_mask)
    metrics = {}
    for name, path in refs.items():
        if name not in out.names:
            raise UsageError(f"--reference {name} has no matching output contrast")
        ref = _read_image(path)
        filled = out.volumes[out.names.index(name)]
        metrics[name] = {
            "normalized_rmse": rmse_in_mask(filled, ref, lesion, nawm),
        }
    return metrics


# ---------------------------------------------------------------- commands

def cmd_fill(args, cfg) -> int:
    if not args.mask:
        raise UsageError("--mask is required")
    lesion = _read_mask(args.mask)
    return _engine_run(args, cfg, MaskVolume.zeros_like(lesion), lesion, "fill", {"mask": Path(args.mask)})


def cmd_synth(args, cfg) -> int:
    target = _read_mask(args.target_mask)
    repaint = _read_mask(args.repaint_mask) if args.repaint_mask else target
    inputs = {"target_mask": Path(args.target_mask)}
    if args.repaint_mask:
        _check_superset(target, repaint)
        inputs["repaint_mask"] = Path(args.repaint_mask)
    return _engine_run(args, cfg, target, repaint, "synth", inputs)


def _check_superset(target: MaskVolume, repaint: MaskVolume):
    if target.shape != repaint.shape:
        raise UsageError(f"target mask {target.shape} and repaint mask {repaint.shape} differ in shape")
    bad = int(np.count_nonzero(target.as_bool() & ~repaint.as_bool()))
    if bad:
        raise MaskValidationError("repaint mask must contain the target mask", bad)


def cmd_evolve(args, cfg) -> int:
    target = _read_mask(args.target_mask)
    repaint = _read_mask(args.repaint_mask)
    _check_superset(target, repaint)
    return _engine_run(args, cfg, target, repaint, "evolve",
                       {"target_mask": Path(args.target_mask), "repaint_mask": Path(args.repaint_mask)})


def cmd_train(args, cfg) -> int:
    import torch

    from .denoiser import TrainConfig, extract_training_slices, save_checkpoint, train
    from .phantom import PhantomConfig, make_phantom

    slices, inputs, contrasts = [], {}, None
    if args.data:
        subjects = json.loads(_existing(Path(args.data), "data list").read_text())
        inputs["data"] = Path(args.data)
        for i, subj in enumerate(subjects):
            arrays = {n: _read_image(p).data for n, p in subj["images"].items()}
            contrasts = contrasts or list(arrays)
            vol = MultiContrastVolume.from_arrays({n: arrays.get(n) for n in contrasts})
            mask = _read_mask(subj["mask"]) if subj.get("mask") else MaskVolume(np.zeros(vol.shape, np.uint8))
            slices += extract_training_slices(vol, mask, args.min_foreground)
    for i in range(args.phantoms):
        ph = make_phantom(PhantomConfig(shape=(args.phantom_size,) * 3, seed=args.phantom_seed + i,
                                        lesion_count=args.phantom_lesions))
        contrasts = contrasts or list(ph.lesioned.names)
        slices += extract_training_slices(ph.lesioned, ph.lesions, args.min_foreground)
        slices += extract_training_slices(ph.reference, MaskVolume.zeros_like(ph.lesions), args.min_foreground)
    if not slices:
        raise UsageError("no training data: give --data and/or --phantoms > 0")
    tcfg = TrainConfig(float(cfg["train.lesion_weight"]), float(cfg["train.learning_rate"]),
                       int(cfg["train.batch_size"]), int(cfg["train.epochs"]),
                       float(cfg["train.dropout_prob"]), int(cfg["seed"]))
    sched = _schedule(cfg)
    model, history = train(slices, sched, tcfg, progress=lambda e, l: log.info("epoch %d loss %.5f", e, l))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model, {"T": sched.T, "s": sched.s, "contrasts": contrasts,
                                 "epochs": tcfg.epochs, "seed": tcfg.seed})
    (out.parent / (out.name + ".losses.json")).write_text(json.dumps(history) + "\n")
    _write_provenance(out.parent, "train", cfg, inputs, [out.name, out.name + ".losses.json"],
                      {"n_slices": len(slices), "final_loss": history[-1] if history else None})
    print(json.dumps({"task": "train", "checkpoint": str(out), "n_slices": len(slices),
                      "final_loss": history[-1] if history else None}))
    return EXIT_OK


def cmd_build_dict(args, cfg) -> int:
    from .dictionary import build_dictionary, save_dictionary

    paths = [Path(p) for p in args.mask or []]
    if args.mask_dir:
        paths += sorted(Path(args.mask_dir).glob("*.nii")) + sorted(Path(args.mask_dir).glob("*.nii.gz"))
    if not paths:
        raise UsageError("give --mask and/or --mask-dir")
    masks = [_read_mask(p) for p in paths]
    names = [p.name.split(".")[0] for p in paths]
    shape = masks[0].shape
    for p, m in zip(paths, masks):
        if m.shape != shape:
            from .errors import IngestionError

            raise IngestionError(f"{p}: mask shape {m.shape} differs from dictionary shape {shape}")
    d = build_dictionary(masks, args.space_id, int(cfg["dict.connectivity"]), names)
    out = save_dictionary(d, args.out_dir)
    _write_provenance(out, "build-dict", cfg, {f"mask:{p.name}": p for p in paths}, ["dictionary.json"],
                      {"n_sessions": len(d.sessions), "n_components": d.n_components})
    print(json.dumps({"task": "build-dict", "sessions": len(d.sessions), "components": d.n_components}))
    return EXIT_OK


def cmd_sample_mask(args, cfg) -> int:
    from . import rng as rngmod
    from .dictionary import load_dictionary, sample_candidate_mask
    from .nifti import write_nifti

    d = load_dictionary(_existing(Path(args.dict) / "dictionary.json", "dictionary").parent)
    mask, info = sample_candidate_mask(d, int(cfg["dict.n_sessions"]), float(cfg["dict.fraction"]),
                                       rngmod.stream(int(cfg["seed"]), rngmod.MASK_SAMPLING, 0),
                                       cfg["dict.mode"], return_info=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_nifti(out, mask)
    info["lesion_voxels"] = mask.count
    print(json.dumps({"task": "sample-mask", "out": str(out), **info}, sort_keys=True))
    return EXIT_OK


def cmd_gen_dataset(args, cfg) -> int:
    from dataclasses import replace

    from .dictionary import generate_dataset, load_dictionary
    from .pipeline import inpaint
    from .sampler import RepaintMasks

    d = load_dictionary(_existing(Path(args.dict) / "dictionary.json", "dictionary").parent)
    ckpt_contrasts = None
    if getattr(args, "checkpoint", None):
        _, ckpt_contrasts = _denoiser(args, cfg)
    base, inputs = _load_inputs(args, ckpt_contrasts)
    scfg = _sampler_config(cfg)

    def synthesize(vol, mask, image_seed):
        den, _ = _denoiser(args, cfg, vol, mask.data)
        return inpaint(vol, RepaintMasks.synthesis(mask), replace(scfg, seed=image_seed), den,
                       views=cfg["views"], p_low=cfg["normalize.p_low"], p_high=cfg["normalize.p_high"])

    out_dir = Path(args.out_dir)
    rows = generate_dataset(d, base, args.n_images, out_dir, synthesize=synthesize, seed=int(cfg["seed"]),
                            n_sessions=int(cfg["dict.n_sessions"]), fraction=float(cfg["dict.fraction"]),
                            mode=cfg["dict.mode"])
    _write_provenance(out_dir, "gen-dataset", cfg, inputs, ["manifest.jsonl"],
                      {"n_images": args.n_images, "n_failed": sum(r["status"] != "ok" for r in rows)})
    print(json.dumps({"task": "gen-dataset", "n_images": len(rows),
                      "n_failed": sum(r["status"] != "ok" for r in rows)}))
    return EXIT_OK


def cmd_phantom(args, cfg) -> int:
    from .nifti import write_nifti
    from .phantom import PhantomConfig, make_phantom

    shape = tuple(args.shape) if len(args.shape) == 3 else (args.shape[0],) * 3
    ph = make_phantom(PhantomConfig(shape=shape, tissue_layout=args.layout, lesion_count=args.lesions,
                                    gamma=args.gamma, seed=int(cfg["seed"])))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for prefix, mcv in (("lesioned", ph.lesioned), ("reference", ph.reference)):
        written += _write_outputs(out, mcv, prefix)
    for name, m in (("lesion_mask", ph.lesions), ("nawm_mask", ph.nawm)):
        write_nifti(out / f"{name}.nii", m)
        written.append(f"{name}.nii")
    _write_provenance(out, "phantom", cfg, {}, written,
                      {"phantom": {"shape": list(shape), "lesions": args.lesions, "gamma": args.gamma,
                                   "layout": args.layout, "lesion_voxels": ph.lesions.count}})
    print(json.dumps({"task": "phantom", "out_dir": str(out), "files": sorted(written)}))
    return EXIT_OK


def cmd_eval_fill(args, cfg) -> int:
    from .phantom import rmse_in_mask

    filled = _read_image(args.filled)
    ref = _read_image(args.reference)
    lesion = _read_mask(args.lesion_mask)
    nawm = _read_mask(args.nawm_mask)
    try:
        value = rmse_in_mask(filled, ref, lesion, nawm)
    except ShapeError as exc:
        raise UsageError(str(exc)) from exc
    report = {"normalized_rmse": value, "lesion_voxels": lesion.count, "nawm_voxels": nawm.count,
              "nawm_mean": float(np.asarray(ref.data, np.float64)[nawm.as_bool()].mean())}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def window_slice(plane: np.ndarray, window: float | None, level: float | None) -> np.ndarray:
    """Map intensities to 8-bit: ``round(255 * clip((v - lo) / (hi - lo), 0, 1))``.

    ``lo, hi = level -/+ window / 2``; defaults span the plane's min..max. A
    zero-width window maps everything to mid-gray (128).
    """
    plane = np.asarray(plane, dtype=np.float64)
    if window is None or level is None:
        lo, hi = float(plane.min()), float(plane.max())
        window = hi - lo if window is None else window
        level = (hi + lo) / 2 if level is None else level
    lo, hi = level - window / 2, level + window / 2
    if hi <= lo:
        return np.full(plane.shape, 128, np.uint8)
    return np.round(np.clip((plane - lo) / (hi - lo), 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray):
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def cmd_render(args, cfg) -> int:
    from .nifti import read_nifti

    vol = read_nifti(_existing(Path(args.volume), "volume"))
    if isinstance(vol, MaskVolume):
        vol = Volume(vol.data.astype(np.float32), vol.spacing)
    view = reorient(vol, Orientation(args.view))
    n = view.shape[-1]
    if not 0 <= args.slice < n:
        raise UsageError(f"slice {args.slice} out of range [0, {n - 1}] for the {args.view} view")
    img = window_slice(view.data[:, :, args.slice], args.window, args.level)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img, mode="L").save(out, format="PNG")
    else:
        write_pgm(out, img)
    print(json.dumps({"task": "render", "out": str(out), "shape": list(img.shape)}))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _engine_flags(p):
    p.add_argument("--image", action="append", metavar="NAME=PATH", help="input contrast (repeatable)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint", help="trained weight file")
    p.add_argument("--analytic-oracle", action="store_true",
                   help="use a Gaussian prior fitted to the image instead of a trained network")
    p.add_argument("--views", choices=["axial", "all"], default=None)
    p.add_argument("--tau", type=str, default=None, help="truncation timestep, or 'none'")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--x0-clip", dest="x0_clip", type=float, default=None)


def _common(p):
    p.add_argument("--config", help="JSON file of flat dotted keys")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lesionpaint", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lesionpaint {__version__}")
    sub = parser.add_subparsers(dest="task", required=True, parser_class=_Parser)

    p = sub.add_parser("fill", help="replace lesions with healthy-appearing tissue")
    _common(p)
    _engine_flags(p)
    p.add_argument("--mask", help="lesion mask (uint8 NIfTI)")
    p.add_argument("--reference", action="append", metavar="NAME=PATH", help="lesion-free reference for metrics")
    p.add_argument("--nawm-mask")
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("synth", help="synthesize lesions inside a target mask")
    _common(p)
    _engine_flags(p)
    p.add_argument("--target-mask", required=True)
    p.add_argument("--repaint-mask")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evolve", help="lesion evolution with target and repaint masks")
    _common(p)
    _engine_flags(p)
    p.add_argument("--target-mask", required=True)
    p.add_argument("--repaint-mask", required=True)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("train", help="train the noise predictor")
    _common(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--data", help="JSON list of {images: {name: path}, mask: path}")
    p.add_argument("--phantoms", type=int, default=0, help="number of generated phantom subjects")
    p.add_argument("--phantom-size", type=int, default=32)
    p.add_argument("--phantom-seed", type=int, default=100)
    p.add_argument("--phantom-lesions", type=int, default=6)
    p.add_argument("--min-foreground", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--lesion-weight", dest="lesion_weight", type=float, default=None)
    p.add_argument("--dropout-prob", dest="dropout_prob", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-dict", help="build a lesion dictionary from aligned masks")
    _common(p)
    p.add_argument("--mask", action="append")
    p.add_argument("--mask-dir")
    p.add_argument("--space-id", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--connectivity", type=int, choices=[6, 18, 26], default=None)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("sample-mask", help="sample one composite candidate mask")
    _common(p)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-sessions", dest="n_sessions", type=int, default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--mode", choices=["pooled", "per-session"], default=None)
    p.set_defaults(func=cmd_sample_mask)

    p = sub.add_parser("gen-dataset", help="synthesize a lesion dataset from a dictionary")
    _common(p)
    _engine_flags(p)
    p.add_argument("--dict", required=True)
    p.add_argument("--n-images", type=int, required=True)
    p.add_argument("--n-sessions", dest="n_sessions", type=int, default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--mode", choices=["pooled", "per-session"], default=None)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("phantom", help="write a synthetic multicontrast phantom")
    _common(p)
    p.add_argument("--shape", type=int, nargs="+", default=[32])
    p.add_argument("--lesions", type=int, default=4)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--layout", choices=["concentric", "blobs"], default="concentric")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("eval-fill", help="normalized lesion-region RMSE report")
    _common(p)
    p.add_argument("--filled", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--lesion-mask", required=True)
    p.add_argument("--nawm-mask", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_fill)

    p = sub.add_parser("render", help="write one slice as an 8-bit PGM/PNG")
    _common(p)
    p.add_argument("--volume", required=True)
    p.add_argument("--view", choices=[o.value for o in Orientation], default="axial")
    p.add_argument("--slice", type=int, required=True)
    p.add_argument("--window", type=float)
    p.add_argument("--level", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"lesionpaint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import torch

        torch.set_num_threads(args.threads)
    try:
        cfg = resolve(args)
        return args.func(args, cfg)
    except (UsageError, ConfigError, MaskValidationError) as exc:
        print(f"lesionpaint {args.task}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LesionPaintError, OSError) as exc:
        print(f"lesionpaint {args.task}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
