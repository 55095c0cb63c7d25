"""Batch command line for the workbench.

Subcommands: calibrate, scan (raster|spokes|polyline), train (svm|mlp),
eval, report, serve, replay. A JSON workbench config names the phantom
document, rig seed, sensor model overrides, and optional calibration/model
references; PALPBENCH_DATA_ROOT (or --data-root) locates session storage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..calibration import run_calibration, save_calibration
from ..features import SENSORS, feature_names
from ..learn import (
    Dataset,
    evaluate,
    load_model,
    mlp_train,
    pca_fit,
    pca_project,
    save_model,
    stratified_split,
    svm_train,
)
from ..materials import load_phantom
from ..rig import RigConfig, RigSimulator, SensorModel
from ..scan import RoiPolygon, polyline_plan, raster_plan, spoke_plan
from .service import SessionService, WorkbenchConfig
from .store import data_root

SENSOR_CHOICES = {
    "all": SENSORS,
    "force": ("force",),
    "mic_left": ("mic_left",),
    "mic_right": ("mic_right",),
    "mics": ("mic_left", "mic_right"),
}


def load_workbench(config_path, data_root_override=None):
    """Build (sim, service, config dict) from a workbench config file."""
    with open(config_path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    base = Path(config_path).parent

    def resolve(key):
        value = cfg.get(key, "")
        return str(base / value) if value and not Path(value).is_absolute() else value

    phantom = load_phantom(resolve("phantom"))
    rig_kwargs = {"seed": int(cfg.get("seed", 0))}
    if "sensors" in cfg:
        rig_kwargs["sensors"] = SensorModel(**cfg["sensors"])
    rig_config = RigConfig(**rig_kwargs)
    sim = RigSimulator(phantom, rig_config)
    wb = WorkbenchConfig(
        phantom_path=resolve("phantom"),
        calibration_path=resolve("calibration"),
        model_path=resolve("model"),
        rig_seed=rig_config.seed,
        palpation_depth_mm=float(cfg.get("depth_mm", 2.0)),
        force_limit_n=float(cfg.get("force_limit_n", 45.0)),
        point_delay_s=float(cfg.get("point_delay_s", 0.0)),
    )
    root = data_root(data_root_override or cfg.get("data_root"))
    root.mkdir(parents=True, exist_ok=True)
    service = SessionService(sim, root, wb)
    return sim, service, cfg


def dataset_from_stores(stores):
    """Labeled feature table from completed sessions (ground-truth materials)."""
    names = feature_names(SENSORS)
    vectors, materials = [], []
    for store in stores:
        for meta in store.manifest["records"]:
            if "features" not in meta:
                raise SystemExit(f"session {store.session_id} has no extracted features")
            vectors.append([float(v) for v in meta["features"]])
            materials.append(meta["material"])
    class_names = tuple(sorted(set(materials)))
    labels = np.array([class_names.index(m) for m in materials])
    return Dataset(
        vectors=np.array(vectors),
        labels=labels,
        class_names=class_names,
        feature_names=names,
        sensor_mask=SENSORS,
    )


def cmd_calibrate(args):
    sim, service, _ = load_workbench(args.config, args.data_root)
    result, corr = run_calibration(
        sim, grid=tuple(args.grid), z_levels=tuple(args.z_levels)
    )
    save_calibration(
        result,
        args.out,
        source={"config": str(args.config), "n_points": len(corr)},
    )
    print(
        f"calibrated from {len(corr)} laser points "
        f"({args.grid[0]}x{args.grid[1]} grid x {len(args.z_levels)} Z levels; "
        f"grid size is a configuration assumption): residual "
        f"{result.residual_mean:.4f} +/- {result.residual_sd:.4f} mm -> {args.out}"
    )
    return 0


def _parse_pixel_list(items):
    return np.array([[float(t) for t in item.split(",")] for item in items])


def _depth_lookup_for(sim):
    def lookup(u, v):
        k = sim.camera.intrinsics
        ui, vi = int(round(u)), int(round(v))
        if not (0 <= vi < k.height and 0 <= ui < k.width):
            return None
        d = float(sim.sample_depth(ui, vi))
        return d if d > 0 else None

    return lookup


def cmd_scan(args):
    sim, service, _ = load_workbench(args.config, args.data_root)
    limits = (sim.config.travel_x, sim.config.travel_y)
    if args.resume:
        store = service.recover(service.open_session(args.session))
    else:
        if args.pattern == "raster":
            plan = raster_plan(tuple(args.origin), args.nx, args.ny, args.step, *limits)
        elif args.pattern == "spokes":
            if service.calibration is None:
                raise SystemExit("spokes scan needs a calibration reference in the config")
            roi = RoiPolygon(_parse_pixel_list(args.roi))
            plan = spoke_plan(
                roi, service.calibration, _depth_lookup_for(sim), sim.camera.intrinsics,
                n_spokes=args.n_spokes, step=args.step, max_radius=args.max_radius,
                limits_x=limits[0], limits_y=limits[1],
            )
        else:
            if service.calibration is None:
                raise SystemExit("polyline scan needs a calibration reference in the config")
            plan = polyline_plan(
                _parse_pixel_list(args.vertices), service.calibration,
                _depth_lookup_for(sim), sim.camera.intrinsics, spacing=args.spacing,
                limits_x=limits[0], limits_y=limits[1],
            )
        store = service.create_session(args.session, plan)
    total = len(store.plan())
    sub = service.subscribe(store, kinds=("POINT_RESULT",))
    store = service.run_plan(store)
    for event in sub.drain():
        if "predicted" in event.payload:
            p = event.payload
            print(
                f"point {p['index']:3d} at ({p['x_mm']:.1f}, {p['y_mm']:.1f}) -> "
                f"{p['class_names'][p['predicted']]} ({max(p['probs']):.2f})"
            )
    print(f"session {store.session_id}: {store.state}, {store.completed_count()}/{total} points")
    return 0 if store.state in ("DONE", "PAUSED") else 1


def cmd_train(args):
    _, service, _ = load_workbench(args.config, args.data_root)
    stores = [service.open_session(sid) for sid in args.sessions]
    full = dataset_from_stores(stores)
    mask = SENSOR_CHOICES[args.sensors]
    ds = full.select_sensors(mask)
    train, test = stratified_split(ds, test_fraction=args.test_fraction, seed=args.seed)
    if args.model == "svm":
        model = svm_train(train.vectors, train.labels, ds.class_names, C=args.svm_c, seed=args.seed)
    else:
        model = mlp_train(
            train.vectors, train.labels, ds.class_names,
            hidden=tuple(args.hidden), epochs=args.epochs, lr=args.lr, seed=args.seed,
        )
    cm = evaluate(model, test)
    save_model(
        model, args.out,
        standardization=train.standardization,
        sensor_mask=mask,
        dataset_hash=full.content_hash(),
        extra={"test_accuracy": cm.accuracy, "sessions": list(args.sessions)},
    )
    out_png = Path(args.out).with_suffix(".confusion.png")
    cm.save_png(out_png, title=f"{args.model} [{args.sensors}] acc {cm.accuracy:.3f}")
    print(f"{args.model} [{args.sensors}]: test accuracy {cm.accuracy:.4f} -> {args.out}")
    print(cm.to_csv())
    return 0


def cmd_eval(args):
    _, service, _ = load_workbench(args.config, args.data_root)
    model, std, mask, _ = load_model(args.model)
    stores = [service.open_session(sid) for sid in args.sessions]
    full = dataset_from_stores(stores)
    ds = full.select_sensors(mask or SENSORS)
    vectors = std.apply(ds.vectors) if std is not None else ds.vectors
    probe = Dataset(
        vectors=vectors, labels=ds.labels, class_names=tuple(model.class_names),
        feature_names=ds.feature_names, sensor_mask=ds.sensor_mask,
    )
    cm = evaluate(model, probe)
    print(cm.to_csv())
    if args.out:
        cm.save_png(args.out)
        print(f"confusion matrix -> {args.out}")
    return 0


def cmd_report(args):
    _, service, _ = load_workbench(args.config, args.data_root)
    store = service.open_session(args.session)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    full = dataset_from_stores([store])

    lines = [
        f"session {store.session_id}: {store.completed_count()} palpations, state {store.state}",
        "",
        "stiffness by material (N/mm):",
    ]
    k_col = full.feature_names.index("stiffness_n_per_mm")
    for c, name in enumerate(full.class_names):
        vals = full.vectors[full.labels == c, k_col]
        lines.append(f"  {name:10s} {vals.mean():9.4f} +/- {vals.std(ddof=1):.4f}  (n={len(vals)})")
    lines += [
        "",
        f"assumptions: palpation depth {service.config.palpation_depth_mm} mm, "
        f"force limit {service.config.force_limit_n} N (not reported by the source system)",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for mask_name in ("force", "mics", "all"):
        ds = full.select_sensors(SENSOR_CHOICES[mask_name])
        model = pca_fit(ds.vectors, 2)
        scores = pca_project(model, ds.vectors)
        fig, ax = plt.subplots(figsize=(5, 4))
        for c, name in enumerate(ds.class_names):
            pts = scores[ds.labels == c]
            ax.scatter(pts[:, 0], pts[:, 1], s=12, label=name)
        ax.set_title(f"PCA ({mask_name})")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / f"pca_{mask_name}.png", dpi=120)
        plt.close(fig)

    if service.model is not None and tuple(service.class_names) == tuple(full.class_names):
        probe = full.select_sensors(service.model_mask)
        vectors = probe.vectors
        if service.standardization is not None:
            vectors = service.standardization.apply(vectors)
        cm = evaluate(
            service.model,
            Dataset(vectors=vectors, labels=probe.labels, class_names=full.class_names,
                    feature_names=probe.feature_names, sensor_mask=probe.sensor_mask),
        )
        cm.save_png(out / "confusion.png", title=f"session {store.session_id}")
        (out / "confusion.csv").write_text(cm.to_csv())

    for artifact in ("map.png", "map.json"):
        src = store.path / artifact
        if src.exists():
            (out / artifact).write_bytes(src.read_bytes())
    print("\n".join(lines))
    print(f"report -> {out}")
    return 0


def cmd_replay(args):
    _, service, _ = load_workbench(args.config, args.data_root)
    store = service.open_session(args.session)
    if store.completed_count() == 0:
        raise SystemExit(f"session {args.session} has no records to replay")
    before_features = store.read_features_bytes()
    before_predictions = store.read_predictions_bytes()
    features, predictions = service.replay(store)
    if not before_features:
        print(f"replay of {args.session}: tables recomputed from records (none existed before)")
        return 0
    same = features == before_features and predictions == before_predictions
    print(f"replay of {args.session}: {'byte-identical' if same else 'DIFFERS'}")
    return 0 if same else 1


def cmd_serve(args):
    import uvicorn

    from .api import create_app

    _, service, _ = load_workbench(args.config, args.data_root)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="palpbench", description=__doc__)
    parser.add_argument("--data-root", default=None, help="session storage root")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("calibrate", help="run the laser calibration sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", nargs=2, type=int, default=[3, 3])
    p.add_argument("--z-levels", nargs="+", type=float, default=[0.0, 15.0, 30.0])
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("scan", help="run a probing session")
    scan_sub = p.add_subparsers(dest="pattern", required=True)
    for name in ("raster", "spokes", "polyline"):
        sp = scan_sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--session", required=True)
        sp.add_argument("--resume", action="store_true")
        if name == "raster":
            sp.add_argument("--origin", nargs=2, type=float, default=[95.0, 95.0])
            sp.add_argument("--nx", type=int, default=10)
            sp.add_argument("--ny", type=int, default=10)
            sp.add_argument("--step", type=float, default=1.0)
        elif name == "spokes":
            sp.add_argument("--roi", nargs="+", default=[], help="pixel vertices u,v")
            sp.add_argument("--n-spokes", type=int, default=8)
            sp.add_argument("--step", type=float, default=1.0)
            sp.add_argument("--max-radius", type=float, default=10.0)
        else:
            sp.add_argument("--vertices", nargs="+", default=[], help="pixel vertices u,v")
            sp.add_argument("--spacing", type=float, default=1.0)
        sp.set_defaults(func=cmd_scan)

    p = sub.add_parser("train", help="fit a classifier on persisted sessions")
    p.add_argument("model", choices=["svm", "mlp"])
    p.add_argument("--config", required=True)
    p.add_argument("--sessions", nargs="+", required=True)
    p.add_argument("--sensors", choices=sorted(SENSOR_CHOICES), default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--svm-c", type=float, default=10.0)
    p.add_argument("--hidden", nargs="+", type=int, default=[32])
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.05)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file against sessions")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--sessions", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render summary artifacts for a session")
    p.add_argument("--config", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="recompute features/predictions from disk")
    p.add_argument("--config", required=True)
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="start the control API")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8741)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except SystemExit:
        raise
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
