"""Command-line surface and the micro training demo.

Subcommands: synth, gt-density, calibrate, select-regions, dafm, dffm,
eval, gradcheck, train-demo.  Exit codes: 0 success, 2 usage error,
3 file-format error, 4 numeric failure (non-finite values or a gradient
check above tolerance).  All outputs are deterministic for a fixed seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import autodiff as ad
from .dafm import DafmParams, dafm_forward, dafm_params, expected_agents
from .density import (BBoxAnnotation, DgbConfig, calib_params, calibrate_density,
                      density_loss, dgb_forward, dgb_params, gt_density, total_loss)
from .dffm import DEFAULT_KERNEL_SET, dffm_forward, dffm_params
from .errors import (DenseFocusError, FormatError, InvalidArgumentError,
                     NumericError, UnsupportedOperationError)
from .evalkit import ap_report
from .regions import refine_mask, threshold_mask
from .synthgen import SceneSpec, generate_scene, perturb_detections
from .tensorfile import (load_annotation_file, read_tensor, save_annotation_file,
                         write_heatmap, write_tensor)

GRADCHECK_TOLERANCE = 1e-5


def _ensure_finite(arr, label: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{label}: non-finite values produced")


def _load_json(path, label: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise InvalidArgumentError(f"{label}: no such file {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{label} {path}: invalid JSON ({exc})")
    if not isinstance(doc, dict):
        raise FormatError(f"{label} {path}: expected a JSON object")
    return doc


def _resolve_seed(args, file_seed=None, default=0) -> int:
    if args.seed is not None:
        return args.seed
    if file_seed is not None:
        return int(file_seed)
    return default


def _verbose(args, msg: str) -> None:
    if args.verbose:
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    doc = _load_json(args.spec, "scene spec")
    try:
        spec = SceneSpec(
            width=int(doc["width"]), height=int(doc["height"]),
            n_clusters=int(doc["n_clusters"]),
            objects_per_cluster=tuple(doc.get("objects_per_cluster", (4, 10))),
            object_size=tuple(doc.get("object_size", (4, 16))),
            cluster_spread=float(doc.get("cluster_spread", 8.0)),
            seed=_resolve_seed(args, doc.get("seed"), 0))
    except KeyError as exc:
        raise FormatError(f"scene spec {args.spec}: missing field {exc}")
    os.makedirs(args.out_dir, exist_ok=True)
    image, annotations = generate_scene(spec, image_id=args.image_id)
    _ensure_finite(image, "synth image")
    write_tensor(os.path.join(args.out_dir, "image.drmt"), image)
    write_heatmap(os.path.join(args.out_dir, "image.pgm"), image)
    images = {args.image_id: {"width": spec.width, "height": spec.height,
                              "file_name": "image.drmt"}}
    save_annotation_file(os.path.join(args.out_dir, "annotations.json"),
                         images, annotations)
    dets = perturb_detections(annotations, jitter_px=args.jitter,
                              drop_rate=args.drop, score_noise=args.score_noise,
                              seed=spec.seed + 1)
    save_annotation_file(os.path.join(args.out_dir, "detections.json"),
                         images, dets)
    _verbose(args, f"synth: {len(annotations)} objects, {len(dets)} detections")
    return 0


def cmd_gt_density(args) -> int:
    images, annotations, _ = load_annotation_file(args.annotations)
    if args.image_id not in images:
        raise InvalidArgumentError(f"gt-density: image id {args.image_id} not in file")
    img = images[args.image_id]
    anns = [a for a in annotations if a.image_id == args.image_id]
    dmap = gt_density(anns, int(img["height"]), int(img["width"]))
    _ensure_finite(dmap.values, "gt density")
    write_tensor(args.out, dmap.values)
    if args.heatmap:
        write_heatmap(args.heatmap, dmap.values)
    _verbose(args, f"gt-density: {len(anns)} objects, mass {dmap.mass():.4f}, "
                   f"{dmap.skipped} skipped")
    return 0


def cmd_calibrate(args) -> int:
    doc = _load_json(args.params, "calibrate params")
    seed = _resolve_seed(args, doc.get("seed"), 0)
    params = calib_params(seed, c_mid=int(doc.get("c_mid", 4)))
    d = read_tensor(args.density)
    out = calibrate_density(d, params)
    _ensure_finite(out.values, "calibrated density")
    write_tensor(args.out, out.values)
    if args.heatmap:
        write_heatmap(args.heatmap, out.values)
    return 0


def cmd_select_regions(args) -> int:
    d = read_tensor(args.density)
    mask = threshold_mask(d, args.mode, args.value)
    refined, regions = refine_mask(mask)
    os.makedirs(args.out_dir, exist_ok=True)
    write_tensor(os.path.join(args.out_dir, "mask.drmt"), refined)
    write_heatmap(os.path.join(args.out_dir, "mask.pgm"), refined)
    with open(os.path.join(args.out_dir, "regions.json"), "w", encoding="utf-8") as f:
        json.dump(regions.to_json_dict(), f, indent=1, sort_keys=True)
        f.write("\n")
    _verbose(args, f"select-regions: {len(regions.rectangles)} rectangles")
    return 0


def cmd_dafm(args) -> int:
    doc = _load_json(args.params, "attention params")
    seed = _resolve_seed(args, doc.get("seed"), 0)
    x = read_tensor(args.features)
    if x.ndim != 3:
        raise InvalidArgumentError(f"dafm: features must be 3-D, got shape {x.shape}")
    d = read_tensor(args.density)
    bank_kernel = int(doc.get("bank_kernel", 7))
    n_agents = expected_agents(x.shape[1], x.shape[2], bank_kernel)
    params = dafm_params(x.shape[0], int(doc.get("embed", x.shape[0])), n_agents,
                         seed, dw_kernel=int(doc.get("dw_kernel", 3)))
    out, inter = dafm_forward(
        x, d, params,
        thresh_mode=doc.get("thresh_mode", "quantile"),
        thresh_value=float(doc.get("thresh_value", 0.10)),
        bank_kernel=bank_kernel, return_intermediates=True)
    _ensure_finite(out, "dafm output")
    write_tensor(args.out, out)
    if args.dump_dir:
        os.makedirs(args.dump_dir, exist_ok=True)
        write_tensor(os.path.join(args.dump_dir, "raw_mask.drmt"), inter.raw_mask)
        write_tensor(os.path.join(args.dump_dir, "refined_mask.drmt"),
                     inter.refined_mask)
        with open(os.path.join(args.dump_dir, "regions.json"), "w",
                  encoding="utf-8") as f:
            json.dump(inter.regions.to_json_dict(), f, indent=1, sort_keys=True)
            f.write("\n")
        if inter.bank is not None:
            write_tensor(os.path.join(args.dump_dir, "bank.drmt"), inter.bank)
            write_tensor(os.path.join(args.dump_dir, "gathered.drmt"), inter.gathered)
    _verbose(args, f"dafm: {len(inter.regions.rectangles)} regions")
    return 0


def cmd_dffm(args) -> int:
    doc = _load_json(args.params, "fusion params")
    seed = _resolve_seed(args, doc.get("seed"), 0)
    p = read_tensor(args.features)
    if p.ndim != 3:
        raise InvalidArgumentError(f"dffm: features must be 3-D, got shape {p.shape}")
    d = read_tensor(args.density)
    try:
        kernel_set = tuple(int(k) for k in args.kernels.split(",") if k != "")
    except ValueError:
        raise InvalidArgumentError(f"dffm: bad --kernels value {args.kernels!r}")
    params = dffm_params(p.shape[0], kernel_set, seed,
                         ca_reduction=int(doc.get("ca_reduction", 4)),
                         sa_kernel=int(doc.get("sa_kernel", 7)))
    out = dffm_forward(p, d, params, kernel_set)
    _ensure_finite(out, "dffm output")
    write_tensor(args.out, out)
    return 0


def cmd_eval(args) -> int:
    _, gts, _ = load_annotation_file(args.gt)
    _, _, dets = load_annotation_file(args.dets)
    report = ap_report(dets, gts, max_dets=args.max_dets)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(payload)
    if args.csv:
        keys = sorted(report.to_dict())
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(",".join(keys) + "\n")
            f.write(",".join(repr(report.to_dict()[k]) for k in keys) + "\n")
    return 0


def dafm_check_point(seed: int):
    """Seeded micro inputs for finite-difference checks of the focused
    attention block: features, density, parameters, reduction weights."""
    from .params import seeded_uniform
    x = 4.0 * seeded_uniform(seed, "check.dafm.x", (3, 8, 8), 9)
    d = np.abs(seeded_uniform(seed, "check.dafm.density", (1, 8, 8), 1))
    w_red = seeded_uniform(seed, "check.dafm.reduce", (3, 8, 8), 1)
    params = dafm_params(3, 3, expected_agents(8, 8), seed)
    return x, d, params, w_red


# Input / mix-projector scale factors giving well-conditioned affinity
# logits.  At unit scales the C x C softmax sits almost exactly at uniform,
# gradients fall below the 1e-6 finite-difference noise floor, and the
# comparison reads roundoff instead of the derivative.
_DFFM_POINT_SCALES = (24.0, 4.0)


def dffm_check_point(seed: int):
    """Seeded micro inputs for finite-difference checks of the fusion block.

    The parallel 3x3 conv path is zeroed (its output would inflate the
    scalar without carrying any band-parameter gradient) and the mix
    projectors are scaled so the affinity softmax stays responsive."""
    from .params import seeded_uniform
    x_scale, mix_scale = _DFFM_POINT_SCALES
    x = x_scale * seeded_uniform(seed, "check.dffm.x", (4, 12, 12), 9)
    d = np.abs(seeded_uniform(seed, "check.dffm.density", (1, 12, 12), 1))
    w_red = seeded_uniform(seed, "check.dffm.reduce", (4, 12, 12), 1)
    p0 = dffm_params(4, (3,), seed)
    path = dataclasses.replace(p0.paths[0],
                               mix_high=mix_scale * p0.paths[0].mix_high,
                               mix_low=mix_scale * p0.paths[0].mix_low)
    params = dataclasses.replace(p0, paths=[path],
                                 conv_w=np.zeros_like(p0.conv_w),
                                 conv_b=np.zeros_like(p0.conv_b))
    return x, d, params, w_red


def _edh_leaves(path):
    """EdhParams fields in a fixed order for differentiation."""
    return [path.mask_w, path.mask_b, path.ca_reduce, path.ca_expand,
            path.sa_w, path.mix_high, path.mix_low]


def _with_edh_leaves(params, leaves):
    path = dataclasses.replace(
        params.paths[0], mask_w=leaves[0], mask_b=leaves[1],
        ca_reduce=leaves[2], ca_expand=leaves[3], sa_w=leaves[4],
        mix_high=leaves[5], mix_low=leaves[6])
    return dataclasses.replace(params, paths=[path])


def _gradcheck_cases(module: str, seed: int):
    """Micro scalar graphs per module; yields (label, fn, point)."""
    from .params import seeded_uniform

    def upoint(name, shape, fan=4):
        return seeded_uniform(seed, f"check.{name}", shape, fan)

    if module == "ops":
        x = upoint("ops.x", (2, 6, 6))
        w = upoint("ops.w", (3, 2, 3, 3), 18)
        yield ("conv2d", lambda xx, ww: ad.sum_all(ad.conv2d(xx, ww, None, 1, 1)),
               [x, w])
        yield ("dct2", lambda xx: ad.sum_all(ad.multiply(ad.dct2(xx), ad.dct2(xx))),
               [x])
        yield ("avg_pool", lambda xx: ad.sum_all(ad.avg_pool(xx, 3, 2)), [x])
    elif module == "density":
        pred = upoint("density.pred", (1, 8, 8))
        gt = np.abs(upoint("density.gt", (1, 8, 8)))
        yield ("density_loss", lambda a, b: density_loss(a, b), [pred, gt])
    elif module == "dafm":
        x, d, params, w_red = dafm_check_point(seed)

        def f_x(xx):
            return ad.sum_all(ad.multiply(dafm_forward(xx, d, params), w_red))
        yield ("dafm_forward/x", f_x, [x])

        ifam_fields = [f.name for f in dataclasses.fields(params.ifam)
                       if isinstance(getattr(params.ifam, f.name), np.ndarray)]

        def f_params(*leaves):
            ifam = dataclasses.replace(
                params.ifam, **dict(zip(ifam_fields, leaves[:len(ifam_fields)])))
            p = dataclasses.replace(params, ifam=ifam, dw_w=leaves[-1])
            return ad.sum_all(ad.multiply(dafm_forward(x, d, p), w_red))
        point = [getattr(params.ifam, n) for n in ifam_fields] + [params.dw_w]
        yield ("dafm_forward/params", f_params, point)
    elif module == "dffm":
        x, d, params, w_red = dffm_check_point(seed)

        def f_params(*leaves):
            p = _with_edh_leaves(params, list(leaves))
            return ad.sum_all(ad.multiply(dffm_forward(x, d, p, (3,)), w_red))
        yield ("dffm_forward/band-params", f_params, _edh_leaves(params.paths[0]))

        def f_x(xx):
            return ad.sum_all(ad.multiply(dffm_forward(xx, d, params, (3,)), w_red))
        yield ("dffm_forward/x", f_x, [x])
    else:
        raise InvalidArgumentError(f"gradcheck: unknown module {module!r}")


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    worst = 0.0
    for label, fn, point in _gradcheck_cases(args.module, seed):
        err = ad.grad_check(fn, point, eps=1e-6, seed=seed)
        _verbose(args, f"gradcheck {label}: max rel error {err:.3e}")
        worst = max(worst, err)
    print(f"max relative error: {worst:.6e}")
    if not (worst < GRADCHECK_TOLERANCE) or math.isnan(worst):
        raise NumericError(
            f"gradcheck: {worst:.3e} above tolerance {GRADCHECK_TOLERANCE}")
    return 0


def train_demo(steps: int = 200, lr: float = 0.05, seed: int = 7,
               loss_weights=(1.0, 1.0, 1.0)):
    """Fit the micro density branch to 8 synthetic 64x64 scenes by plain
    gradient descent on the density loss.  Returns the loss trace, one entry
    per evaluated step (length steps + 1)."""
    if steps < 0:
        raise InvalidArgumentError(f"train_demo: steps must be >= 0, got {steps}")
    if not math.isfinite(lr) or lr < 0:
        raise InvalidArgumentError(f"train_demo: bad learning rate {lr}")
    cfg = DgbConfig()
    scenes = []
    for i in range(8):
        spec = SceneSpec(width=64, height=64, n_clusters=2,
                         objects_per_cluster=(3, 6), object_size=(3, 8),
                         cluster_spread=7.0, seed=seed * 1000 + i)
        image, annotations = generate_scene(spec, image_id=i + 1)
        target = gt_density(annotations, 64, 64).values
        scenes.append((image, target))
    params = dgb_params(cfg, 1, seed)

    def batch_loss(leaves):
        acc = None
        for image, target in scenes:
            pred = dgb_forward(image, leaves, cfg)
            term = total_loss(0.0, 0.0, density_loss(pred, target),
                              weights=loss_weights)
            acc = term if acc is None else ad.add(acc, term)
        return ad.scale(acc, 1.0 / len(scenes))

    trace = []
    for _ in range(steps):
        leaves = {name: ad.Var(params[name]) for name in params}
        loss = batch_loss(leaves)
        value = float(loss.value)
        if not math.isfinite(value):
            raise NumericError(f"train_demo: loss became {value}")
        trace.append(value)
        ad.backward(loss)
        for name in params:
            grad = leaves[name].grad
            if grad is not None:
                params[name] = params[name] - lr * grad
    final_leaves = {name: ad.Var(params[name]) for name in params}
    final = float(batch_loss(final_leaves).value)
    if not math.isfinite(final):
        raise NumericError(f"train_demo: loss became {final}")
    trace.append(final)
    return trace


def cmd_train_demo(args) -> int:
    seed = args.seed if args.seed is not None else 7
    try:
        weights = tuple(float(v) for v in args.loss_weights.split(","))
    except ValueError:
        raise InvalidArgumentError(
            f"train-demo: bad --loss-weights value {args.loss_weights!r}")
    trace = train_demo(steps=args.steps, lr=args.lr, seed=seed,
                       loss_weights=weights)
    lines = ["step,loss"]
    lines += [f"{i},{v!r}" for i, v in enumerate(trace)]
    payload = "\n".join(lines) + "\n"
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            f.write(payload)
    else:
        sys.stdout.write(payload)
    _verbose(args, f"train-demo: initial {trace[0]:.6f}, final {trace[-1]:.6f}")
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densefocus",
        description="Density-guided tiny-object pipeline tools")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed from spec/params files")
    parser.add_argument("--verbose", action="store_true",
                        help="progress diagnostics on stderr")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker count; current commands are single-image, "
                             "results are identical for any value")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-id", type=int, default=1)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--drop", type=float, default=0.1)
    p.add_argument("--score-noise", type=float, default=0.05)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gt-density", help="render the ground-truth density map")
    p.add_argument("--annotations", required=True)
    p.add_argument("--image-id", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap", default=None)
    p.set_defaults(func=cmd_gt_density)

    p = sub.add_parser("calibrate", help="calibrate a density map to (0,1)")
    p.add_argument("--density", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("select-regions", help="threshold + cluster a density map")
    p.add_argument("--density", required=True)
    p.add_argument("--mode", choices=("quantile", "absolute"), default="quantile")
    p.add_argument("--value", type=float, default=0.10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_select_regions)

    p = sub.add_parser("dafm", help="density-guided focused attention")
    p.add_argument("--features", required=True)
    p.add_argument("--density", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-dir", default=None)
    p.set_defaults(func=cmd_dafm)

    p = sub.add_parser("dffm", help="dual-frequency feature fusion")
    p.add_argument("--features", required=True)
    p.add_argument("--density", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--kernels", default=",".join(str(k) for k in DEFAULT_KERNEL_SET))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dffm)

    p = sub.add_parser("eval", help="COCO-protocol AP report")
    p.add_argument("--gt", required=True)
    p.add_argument("--dets", required=True)
    p.add_argument("--max-dets", type=int, default=100)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--module", choices=("ops", "density", "dafm", "dffm"),
                   required=True)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-demo", help="micro density-branch training run")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--trace", default=None, help="CSV output path (default stdout)")
    p.add_argument("--loss-weights", default="1,1,1",
                   help="regression,classification,density loss coefficients")
    p.set_defaults(func=cmd_train_demo)
    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.jobs < 1:
            raise InvalidArgumentError(f"--jobs must be >= 1, got {args.jobs}")
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (InvalidArgumentError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DenseFocusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
