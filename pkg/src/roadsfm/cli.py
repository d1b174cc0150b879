"""Command-line entry point: ``roadsfm synth|estimate|fit|eval|report``.

Options resolve as built-in defaults < ``--config`` file < command-line
flags.  Every run writes ``run.json`` holding the resolved options; passing
that file back through ``--config`` reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as rio
from .estimation import EstimatorConfig, estimate_sequence
from .fitting import (CorrespondenceSet, DegenerateInputError, NoConsensusError, RansacConfig,
                      apply_gates, depth_to_points, load_correspondences, ransac_homography,
                      ransac_plane, save_correspondences)
from .geometry import Calibration, GeometryError, GroundPlane, Homography, plane_residual
from .imaging import ImagingError
from .metrics import (DEFAULT_SEGMENTS, DepthEvalConfig, MetricError, MetricReport, Trajectory,
                      depth_metrics, homography_eval, normal_angle_error, plot_bars, plot_series,
                      plot_trajectories, vo_metrics)
from .synthscene import SceneError, ground_correspondences, render, scene_from_dict, scene_to_dict

log = logging.getLogger("roadsfm")

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


# option tables: name -> (type, default, help); positionals listed separately
_COMMON = {"seed": (int, None, "RNG seed (texture seed for synth, RANSAC/jitter seed otherwise)"),
           "out": (str, "out", "output directory")}

_OPTIONS = {
    "synth": {
        "scene": (str, None, "scene JSON path or bundled scene name (straight, pair)"),
        "corr_stride": (int, 4, "pixel stride of the ground-truth correspondence grid"),
    },
    "estimate": {
        "dataset": (str, None, "dataset directory"),
        "mu": (float, None, "photometric weight"),
        "lam": (float, None, "smoothness weight"),
        "xi": (float, None, "homography weight (0 disables the homography loss)"),
        "alpha": (float, None, "SSIM/L1 blend"),
        "levels": (int, None, "pyramid levels"),
        "grid": (str, None, "depth grid as ROWSxCOLS"),
        "tolerance": (float, None, "relative-decrease convergence tolerance"),
        "camera_height": (float, None, "calibrated camera height h_c in meters (default: calib.json)"),
        "warm_start": (bool, None, "seed each pair with the previous pair's motion"),
    },
    "fit": {
        "model": (str, None, "plane or homography"),
        "input": (str, None, "dataset dir (plane) or correspondence CSV (homography)"),
        "frame": (int, 0, "frame index for plane fitting"),
        "threshold": (float, None, "inlier threshold (default 0.05 m plane, 0.5 px homography)"),
        "max_iterations": (int, 2000, "RANSAC iteration cap"),
        "confidence": (float, 0.999, "RANSAC stopping confidence"),
        "min_inliers": (int, 50, "warn below this many inliers"),
        "min_ratio": (float, 0.6, "warn below this inlier ratio"),
    },
    "eval": {
        "kind": (str, None, "vo, depth, homography or normal"),
        "est": (str, None, "estimate output dir or single result file"),
        "gt": (str, None, "dataset dir or single ground-truth file"),
        "lengths": (str, None, "comma-separated segment lengths in meters (vo)"),
        "scaling": (str, "camera-height", "depth scaling: median-gt, camera-height or none"),
        "scale": (float, None, "explicit s = h_c/h_t for camera-height scaling"),
        "min_depth": (float, 0.1, "depth clamp minimum"),
        "max_depth": (float, 80.0, "depth clamp maximum"),
        "road_only": (bool, True, "restrict depth evaluation to road-mask pixels when available"),
        "frame": (int, None, "frame index for single-file inputs"),
    },
    "report": {
        "inputs": (list, [], "metric JSON files or directories"),
        "title": (str, "roadsfm report", "report heading"),
    },
}
_POSITIONAL = {"synth": ["scene"], "estimate": ["dataset"], "fit": ["model", "input"],
               "eval": ["kind", "est", "gt"], "report": ["inputs"]}
_CHOICES = {("fit", "model"): ("plane", "homography"),
            ("eval", "kind"): ("vo", "depth", "homography", "normal"),
            ("eval", "scaling"): ("median-gt", "camera-height", "none")}


def _add_options(p: argparse.ArgumentParser, cmd: str):
    for name, (typ, _, help_) in _OPTIONS[cmd].items():
        choices = _CHOICES.get((cmd, name))
        if name in _POSITIONAL[cmd]:
            nargs = "*" if typ is list else "?"
            p.add_argument(name, nargs=nargs, default=None, choices=choices, help=help_)
            continue
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None,
                           help=help_)
        else:
            p.add_argument(flag, dest=name, type=typ, default=None, choices=choices, help=help_)


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not reset values given before the subcommand
    def dflt(v):
        return argparse.SUPPRESS if suppress else v
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=dflt(None),
                   help="JSON options file (a previous run.json also works)")
    g.add_argument("--seed", type=int, default=dflt(None), help=_COMMON["seed"][2])
    g.add_argument("--out", default=dflt(None), help=_COMMON["out"][2])
    g.add_argument("-v", "--verbose", action="count", default=dflt(0))
    g.add_argument("--print-config", action="store_true", default=dflt(False),
                   help="print the resolved options as JSON and exit")
    return g


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadsfm", parents=[_global_flags(False)],
                                description="Road-plane structure from motion toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    shared = _global_flags(True)
    for cmd in _OPTIONS:
        _add_options(sub.add_parser(cmd, parents=[shared]), cmd)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags (flags win)."""
    cmd = args.command
    opts = {k: v[1] for k, v in {**_COMMON, **_OPTIONS[cmd]}.items()}
    estimator = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{path}: expected a JSON object")
        if "command" in cfg and cfg["command"] != cmd:
            raise UsageError(f"{path} was written by '{cfg['command']}', not '{cmd}'")
        body = cfg.get("options", cfg)
        estimator = dict(cfg.get("estimator", {}))
        unknown = set(body) - set(opts) - {"schema_version", "command", "estimator", "options"}
        if unknown:
            raise UsageError(f"{path}: unknown options {sorted(unknown)}")
        opts.update({k: v for k, v in body.items() if k in opts})
    for k in opts:
        v = getattr(args, k, None)
        if v is not None and not (isinstance(v, list) and not v and k in _POSITIONAL[cmd]):
            opts[k] = v
    for k in _POSITIONAL[cmd]:
        if opts[k] in (None, []):
            raise UsageError(f"{cmd}: missing required argument '{k}'")
    for (c, k), choices in _CHOICES.items():
        if c == cmd and opts[k] not in choices:
            raise UsageError(f"{cmd}: --{k} must be one of {', '.join(choices)}")
    if estimator:
        opts["estimator"] = estimator
    return opts


def _run_record(cmd: str, opts: dict, **resolved) -> dict:
    body = {k: v for k, v in opts.items() if k not in ("out", "estimator")}
    rec = {"schema_version": 1, "command": cmd, "options": body}
    rec.update(resolved)
    return rec


def _finite(name, arr):
    if not np.all(np.isfinite(np.asarray(arr, dtype=float))):
        raise InvariantError(f"{name} contains non-finite values")


# --- synth ----------------------------------------------------------------------

def _scene_path(name: str) -> Path:
    p = Path(name)
    if p.suffix == "" and not p.exists():
        bundled = resources.files("roadsfm") / "scenes" / f"{name}.json"
        if bundled.is_file():
            return Path(str(bundled))
    if not p.is_file():
        raise UsageError(f"scene file not found: {name}")
    return p


def cmd_synth(opts: dict) -> int:
    path = _scene_path(opts["scene"])
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from None
    if opts["seed"] is not None:
        d.setdefault("texture", {})["seed"] = int(opts["seed"])
    spec = scene_from_dict(d)
    if opts["corr_stride"] < 1:
        raise UsageError("--corr-stride must be at least 1")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    planes = []
    road = []
    for i in range(len(spec.trajectory)):
        f = render(spec, i)
        P = spec.intrinsics.rays()[f.mask] * f.depth.values[f.mask][:, None]
        if len(P) and np.abs(plane_residual(f.plane, P)).max() > 1e-6:
            raise InvariantError(f"frame {i}: road depth leaves the ground plane")
        rio.save_image(f.image, out / f"frame_{i:04d}.png")
        rio.save_depth_png(f.depth, out / f"depth_{i:04d}.png")
        rio.save_mask(f.mask, out / f"mask_{i:04d}.png")
        planes.append(f.plane)
        road.append(float(f.mask.mean()))
        if i > 0:
            pt, pp = ground_correspondences(spec, i, stride=opts["corr_stride"],
                                            seed=spec.texture.seed)
            save_correspondences(CorrespondenceSet(pt, pp), out / f"corr_{i:04d}.csv")
    rio.save_poses(spec.trajectory, out / "poses.txt")
    rio.write_json(out / "plane.json", rio.planes_to_dict(planes))
    calib = Calibration(spec.intrinsics, spec.plane.height, np.asarray(spec.canonical_normal, float))
    rio.write_json(out / "calib.json", calib.to_dict())
    rio.write_json(out / "scene.json", scene_to_dict(spec))
    rio.write_json(out / "run.json", _run_record("synth", opts, seed=spec.texture.seed))
    K = spec.intrinsics
    print(f"synth: {len(spec.trajectory)} frames {K.width}x{K.height} -> {out}")
    print(f"  boxes {len(spec.boxes)}, texture seed {spec.texture.seed}, "
          f"road fraction {min(road):.2f}-{max(road):.2f}")
    return EXIT_OK


# --- estimate -------------------------------------------------------------------

def _estimator_config(opts: dict, calib: Calibration) -> EstimatorConfig:
    d = EstimatorConfig().to_dict()
    d["camera_height"] = float(calib.mounting_height)
    d["canonical_normal"] = [float(x) for x in calib.canonical_normal]
    d.update(opts.get("estimator", {}))
    for k in ("mu", "lam", "xi", "alpha", "levels", "tolerance", "camera_height", "warm_start"):
        if opts[k] is not None:
            d[k] = opts[k]
    if opts["grid"] is not None:
        try:
            r, c = (int(x) for x in str(opts["grid"]).lower().split("x"))
        except ValueError:
            raise UsageError(f"--grid must look like 12x16, got {opts['grid']!r}") from None
        d["grid"] = [r, c]
    if opts["seed"] is not None:
        d["rng_seed"] = int(opts["seed"])
    try:
        return EstimatorConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid estimator option: {e}") from None


def cmd_estimate(opts: dict) -> int:
    ds = rio.load_dataset(opts["dataset"])
    if len(ds.frames) < 2:
        raise UsageError(f"{ds.root}: need at least two frames")
    cfg = _estimator_config(opts, ds.calibration)
    frames = [ds.image(i) for i in ds.frames]
    masks = [ds.mask(i) for i in ds.frames] if ds.has_masks else None
    log.info("estimating %d pairs from %s", len(frames) - 1, ds.root)
    poses, results = estimate_sequence(frames, masks, ds.intrinsics, cfg)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair", "level", "iteration", "E", "E_p", "E_s", "E_h"])
    for k, (res, t) in enumerate(zip(results, ds.frames[1:])):
        _finite(f"pair {t} pose", res.pose.matrix())
        d = res.to_dict()
        d.update({"frame": int(t), "prev_frame": int(ds.frames[k])})
        rio.write_json(out / f"pair_{t:04d}.json", d)
        rio.save_depth_png(res.relative_depth, out / f"depth_{t:04d}.png")
        for row in res.trace:
            w.writerow([t, row[0], row[1]] + [repr(float(x)) for x in row[2:]])
        log.info("pair %d: %d iterations, E=%.5f, flags=%s", t, res.iterations, res.loss.E, res.flags)
    rio.atomic_write_text(out / "loss_trace.csv", buf.getvalue())
    rio.save_poses(Trajectory(poses, list(ds.frames)), out / "poses.txt")
    rio.write_json(out / "run.json", _run_record("estimate", opts, estimator=cfg.to_dict()))
    flagged = sum(bool(r.flags) for r in results)
    print(f"estimate: {len(results)} pairs -> {out} ({flagged} flagged, "
          f"{sum(not r.converged for r in results)} unconverged)")
    return EXIT_OK


# --- fit ------------------------------------------------------------------------

def cmd_fit(opts: dict) -> int:
    model = opts["model"]
    thr = opts["threshold"] if opts["threshold"] is not None else (0.05 if model == "plane" else 0.5)
    try:
        rcfg = RansacConfig(thr, opts["max_iterations"], opts["confidence"],
                            0 if opts["seed"] is None else int(opts["seed"]))
    except ValueError as e:
        raise UsageError(str(e)) from None
    if model == "plane":
        ds = rio.load_dataset(opts["input"])
        i = opts["frame"]
        if i not in ds.frames or not ds.has_depth:
            raise UsageError(f"{ds.root}: need depth for frame {i}")
        mask = ds.mask(i) if ds.has_masks else None
        report = ransac_plane(depth_to_points(ds.depth(i), ds.intrinsics, mask), rcfg)
    else:
        report = ransac_homography(load_correspondences(opts["input"]), rcfg)
    apply_gates(report, opts["min_inliers"], opts["min_ratio"])
    out = Path(opts["out"])
    rio.write_json(out / f"fit_{model}.json", report.to_dict())
    rio.write_json(out / "run.json", _run_record("fit", opts, seed=rcfg.rng_seed))
    print(f"fit {model}: {report.inlier_count} inliers ({report.inlier_ratio:.3f}) in "
          f"{report.iterations} iterations -> {out / f'fit_{model}.json'}")
    for msg in report.warnings:
        print(f"  warning: {msg}")
    return EXIT_OK


# --- eval -----------------------------------------------------------------------

def _pair_files(est: Path) -> dict:
    files = {int(p.stem.split("_")[1]): p for p in sorted(est.glob("pair_*.json"))}
    if not files:
        raise UsageError(f"{est}: no pair_XXXX.json results")
    return files


def _eval_vo(opts, est: Path, gt: Path):
    e = rio.load_poses(est / "poses.txt" if est.is_dir() else est)
    g = rio.load_poses(gt / "poses.txt" if gt.is_dir() else gt)
    if len(e) != len(g):
        raise UsageError(f"frame counts differ: {len(e)} estimated vs {len(g)} ground truth")
    if opts["lengths"]:
        try:
            lengths = [float(x) for x in str(opts["lengths"]).split(",")]
        except ValueError:
            raise UsageError("--lengths must be comma-separated numbers") from None
    else:
        lengths = list(DEFAULT_SEGMENTS)
    try:
        rep = vo_metrics(e, g, lengths)
    except MetricError as err:
        raise UsageError(str(err)) from None
    return rep, lambda path: plot_trajectories({"estimate": e, "ground truth": g}, path)


def _eval_depth(opts, est: Path, gt: Path):
    if est.is_dir():
        pairs = {t: rio.read_json(p) for t, p in _pair_files(est).items()}
        preds = {t: rio.load_depth_png(est / f"depth_{t:04d}.png") for t in pairs}
    else:
        t = 0 if opts["frame"] is None else opts["frame"]
        pairs, preds = {t: {}}, {t: rio.load_depth_png(est)}
    if gt.is_dir():
        ds = rio.load_dataset(gt)
        if not ds.has_depth:
            raise UsageError(f"{gt}: dataset has no depth maps")
        gts = {}
        for t in preds:
            if t not in ds.frames:
                raise UsageError(f"{gt}: no frame {t}")
            gts[t] = (ds.depth(t), ds.mask(t) if (ds.has_masks and opts["road_only"]) else None)
    else:
        if len(preds) != 1:
            raise UsageError("a single ground-truth depth file needs a single prediction")
        gts = {t: (rio.load_depth_png(gt), None) for t in preds}
    rows = {}
    for t, pred in preds.items():
        g, mask = gts[t]
        scale = opts["scale"]
        if opts["scaling"] == "camera-height" and scale is None:
            scale = pairs[t].get("scale")
            if scale is None:
                raise UsageError("camera-height scaling needs --scale or pair results with a scale")
        cfg = DepthEvalConfig(opts["scaling"], opts["min_depth"], opts["max_depth"], mask, scale)
        rows[t] = depth_metrics(pred, g, cfg)
    keys = [k for k in next(iter(rows.values())).metrics if k != "pixels"]
    frames = sorted(rows)
    metrics = {k: (float(np.mean([rows[t][k] for t in frames])), rows[frames[0]].metrics[k][1])
               for k in keys}
    metrics["frames"] = (float(len(frames)), "count")
    series = {"frame": [float(t) for t in frames], "abs_rel": [rows[t]["abs_rel"] for t in frames]}
    rep = MetricReport("depth", metrics, series)
    return rep, lambda path: plot_series({"abs_rel": series["abs_rel"]}, path, "AbsRel")


def _homography_of(d: dict) -> Homography:
    M = d.get("homography") or d.get("matrix") or d.get("model", {}).get("matrix")
    if M is None:
        raise UsageError("result file holds no homography")
    return Homography(np.asarray(M, dtype=float))


def _eval_homography(opts, est: Path, gt: Path):
    if est.is_dir():
        Hs = {t: _homography_of(rio.read_json(p)) for t, p in _pair_files(est).items()}
    else:
        t = 1 if opts["frame"] is None else opts["frame"]
        Hs = {t: _homography_of(rio.read_json(est))}
    if gt.is_dir():
        corr = {t: load_correspondences(gt / f"corr_{t:04d}.csv") for t in Hs}
    else:
        if len(Hs) != 1:
            raise UsageError("a single correspondence file needs a single homography")
        corr = {t: load_correspondences(gt) for t in Hs}
    frames = sorted(Hs)
    # each pair's homography on its own correspondences, errors pooled
    per = {t: homography_eval(Hs[t], corr[t]) for t in frames}
    errs = np.concatenate([per[t].series["error"] for t in frames])
    n_all = sum(per[t]["pairs"] for t in frames)
    metrics = {
        "mean": (float(errs.mean()), "px"), "median": (float(np.median(errs)), "px"),
        "p90": (float(np.percentile(errs, 90)), "px"), "p95": (float(np.percentile(errs, 95)), "px"),
        "max": (float(errs.max()), "px"), "pairs": (float(n_all), "count"),
        "at_infinity": (float(n_all - len(errs)), "count"), "frames": (float(len(frames)), "count"),
    }
    per_pair = [per[t]["mean"] for t in frames]
    rep = MetricReport("homography", metrics,
                       {"frame": [float(t) for t in frames], "mean_per_pair": per_pair})
    return rep, lambda path: plot_bars({str(t): v for t, v in zip(frames, per_pair)}, path)


def _plane_of(d: dict) -> GroundPlane:
    if "plane" in d and isinstance(d["plane"], list):
        v = np.asarray(d["plane"], dtype=float)
        return GroundPlane(v[:3], float(v[3]))
    if "model" in d:
        d = d["model"]
    try:
        return GroundPlane(d["normal"], d["height"])
    except KeyError:
        raise UsageError("result file holds no plane") from None


def _eval_normal(opts, est: Path, gt: Path):
    if est.is_dir():
        planes = {t: _plane_of(rio.read_json(p)) for t, p in _pair_files(est).items()}
    else:
        t = 0 if opts["frame"] is None else opts["frame"]
        planes = {t: _plane_of(rio.read_json(est))}
    src = gt / "plane.json" if gt.is_dir() else gt
    gts = {}
    for t in planes:
        try:
            gts[t] = rio.load_plane(src, t)
        except rio.DatasetError:
            if len(planes) == 1:
                gts[t] = rio.load_plane(src)
            else:
                raise
    frames = sorted(planes)
    errs = [normal_angle_error(planes[t], gts[t]) for t in frames]
    rep = MetricReport("normal", {"mean": (float(np.mean(errs)), "deg"),
                                  "max": (float(np.max(errs)), "deg"),
                                  "frames": (float(len(frames)), "count")},
                       {"frame": [float(t) for t in frames], "angle_deg": errs})
    return rep, lambda path: plot_series({"normal error": errs}, path, "normal error [deg]")


def cmd_eval(opts: dict) -> int:
    est, gt = Path(opts["est"]), Path(opts["gt"])
    for p in (est, gt):
        if not p.exists():
            raise UsageError(f"not found: {p}")
    kind = opts["kind"]
    fn = {"vo": _eval_vo, "depth": _eval_depth, "homography": _eval_homography,
          "normal": _eval_normal}[kind]
    rep, plot = fn(opts, est, gt)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    rio.atomic_write_text(out / f"{kind}.json", rep.to_json())
    rio.atomic_write_text(out / f"{kind}.csv", rep.to_csv())
    if rep.series:
        rio.atomic_write_text(out / f"{kind}_series.csv", rep.series_csv())
    plot(out / f"{kind}.svg")
    rio.write_json(out / "run.json", _run_record("eval", opts))
    print(f"eval {kind}:")
    for k, (v, u) in rep.metrics.items():
        print(f"  {k:12s} {v:.6g} {u}")
    return EXIT_OK


# --- report ---------------------------------------------------------------------

def _metric_files(inputs) -> list:
    files = []
    for s in inputs:
        p = Path(s)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"not found: {p}")
    reps = []
    for f in files:
        try:
            d = json.loads(f.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(d, dict) and "metrics" in d and "name" in d:
            reps.append((f, MetricReport.from_dict(d)))
    if not reps:
        raise UsageError("no metric reports found in the inputs")
    return reps


def cmd_report(opts: dict) -> int:
    reps = _metric_files(opts["inputs"])
    out = Path(opts["out"])
    lines = [f"# {opts['title']}", ""]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "report", "metric", "value", "unit"])
    for f, rep in reps:
        lines += [f"## {rep.name} ({f.as_posix()})", "", "| metric | value | unit |",
                  "|---|---|---|"]
        for k, (v, u) in rep.metrics.items():
            lines.append(f"| {k} | {v:.6g} | {u} |")
            w.writerow([f.as_posix(), rep.name, k, repr(float(v)), u])
        lines.append("")
    rio.atomic_write_text(out / "report.md", "\n".join(lines))
    rio.atomic_write_text(out / "summary.csv", buf.getvalue())
    rio.write_json(out / "run.json", _run_record("report", opts))
    print(f"report: {len(reps)} metric files -> {out / 'report.md'}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

_COMMANDS = {"synth": cmd_synth, "estimate": cmd_estimate, "fit": cmd_fit, "eval": cmd_eval,
             "report": cmd_report}


def _print(obj) -> int:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        opts = resolve(args)
        if args.print_config:
            rec = {"command": args.command, "options": opts}
            if args.command == "estimate":
                ds = rio.load_dataset(opts["dataset"])
                rec["estimator"] = _estimator_config(opts, ds.calibration).to_dict()
            return _print(rec)
        return _COMMANDS[args.command](opts)
    except (UsageError, rio.DatasetError, SceneError, MetricError, DegenerateInputError,
            NoConsensusError, GeometryError, ImagingError, FileNotFoundError, ValueError) as e:
        print(f"roadsfm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as e:
        print(f"roadsfm: internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"roadsfm: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
