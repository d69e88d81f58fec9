"""Command-line surface.

Subcommands: convert, gridsample, synth, label-sample, train, infer, eval,
sweep-ratio, ablate-levels, sweep-k, sweep-seeds, serve. Training and sweep
configs come from a flat key=value text file (see parse_config_file).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .cloud import grid_downsample, load_cloud, save_cloud
from .encoder import EncoderConfig
from .experiments import degradation_sweep, k_sweep, query_level_ablation, seed_sensitivity
from .labels import export_label_file, import_label_file, sample_sparse_labels
from .metrics import eval_report
from .query import QueryConfig, predict
from .scenes import SceneSpec, synth_scene
from .service import serve_annotation
from .training import TrainConfig, load_model, save_model, train

_BOOLS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _ints(s):
    return tuple(int(v) for v in s.split(","))


def configs_from_mapping(kv: dict):
    enc = EncoderConfig(
        level_dims=_ints(kv.get("level_dims", "8,16,32,64")),
        decimation=_ints(kv.get("decimation", "4,4,4,4")),
        neighbors_k_enc=int(kv.get("k_enc", 16)),
        seed=int(kv.get("seed", 0)),
    )
    qc = QueryConfig(
        k=int(kv.get("k", 3)),
        head_widths=_ints(kv.get("head_widths", "256,128,96")),
        distance_power=float(kv.get("distance_power", 2)),
        epsilon=float(kv.get("epsilon", 1e-8)),
        levels=_ints(kv.get("levels", "1,2,3,4")),
    )
    retrain = kv.get("retrain", "auto").lower()
    tc = TrainConfig(
        epochs=int(kv.get("epochs", 200)),
        queries_per_step=int(kv.get("queries_per_step", 256)),
        lr=float(kv.get("lr", 0.01)),
        lr_decay=float(kv.get("lr_decay", 0.95)),
        augment=_BOOLS[kv.get("augment", "true").lower()],
        noise_sigma=float(kv.get("noise_sigma", 0.005)),
        noise_clip=float(kv.get("noise_clip", 0.02)),
        seed=int(kv.get("seed", 0)),
        retrain_with_pseudo=None if retrain == "auto" else _BOOLS[retrain],
        class_weighting=_BOOLS[kv.get("class_weighting", "true").lower()],
    )
    return enc, qc, tc


def parse_config_file(path):
    if path is None:
        return configs_from_mapping({})
    with open(path) as f:
        return configs_from_mapping(parse_config_text(f.read()))


def _detect_format(path):
    return "xyz" if str(path).endswith((".xyz", ".txt")) else "sqnc"


def _load_queries(path):
    """Query positions from an SQNC cloud or a whitespace x y z list."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"SQNC":
        return load_cloud(path, "sqnc").positions
    return load_cloud(path, "xyz").positions


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sqn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert between ASCII xyz and binary clouds")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=None)

    p = sub.add_parser("gridsample", help="grid downsample a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--cell", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled room")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=8000)
    p.add_argument("--extent", default="8,8,3")

    p = sub.add_parser("label-sample", help="sample sparse annotations from gt")
    p.add_argument("--cloud", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train from a cloud and sparse labels")
    p.add_argument("--cloud", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)

    p = sub.add_parser("infer", help="predict labels at query positions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cloud", required=True, help="support cloud to encode")
    p.add_argument("--queries", default=None, help="SQNC cloud or ASCII xyz list")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled cloud")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--boundary-radius", type=float, action="append", default=[])

    for name in ("sweep-ratio", "ablate-levels", "sweep-k", "sweep-seeds"):
        p = sub.add_parser(name)
        p.add_argument("--cloud", default=None)
        p.add_argument("--scene-seed", type=int, default=0)
        p.add_argument("--config", default=None)
        p.add_argument("--out", required=True, help="output directory")
        if name == "sweep-ratio":
            p.add_argument("--ratios", default="0.1,0.01,0.001,0.0001")
        if name == "ablate-levels":
            p.add_argument("--ratio", type=float, default=0.002)
            p.add_argument("--seeds", type=int, default=3)
        if name == "sweep-k":
            p.add_argument("--ratio", type=float, default=0.005)
            p.add_argument("--ks", default="1,3,5,10,25")
        if name == "sweep-seeds":
            p.add_argument("--ratio", type=float, default=0.005)
            p.add_argument("--seeds", type=int, default=5)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--cloud", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--out", required=True, help="SQNL file written on commit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-names", default=None)
    p.add_argument("--frontend", default=None, help="directory of built UI assets")

    args = parser.parse_args(argv)
    return _dispatch(args)


def _experiment_cloud(args):
    if args.cloud:
        return load_cloud(args.cloud, _detect_format(args.cloud))
    return synth_scene(SceneSpec(seed=args.scene_seed))


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "convert":
        cloud = load_cloud(args.input, _detect_format(args.input), num_classes=args.num_classes)
        save_cloud(cloud, args.out, _detect_format(args.out))
        print(f"wrote {args.out} ({len(cloud)} points)")
    elif cmd == "gridsample":
        cloud = load_cloud(args.cloud, _detect_format(args.cloud))
        result = grid_downsample(cloud, args.cell)
        save_cloud(result.sampled, args.out, _detect_format(args.out))
        print(f"{len(cloud)} -> {len(result.sampled)} points at cell {args.cell}")
    elif cmd == "synth":
        spec = SceneSpec(seed=args.seed, extent=tuple(float(v) for v in args.extent.split(",")))
        total = sum(spec.points_per_class)
        scale = args.points / total
        spec = SceneSpec(
            seed=args.seed, extent=spec.extent,
            points_per_class=tuple(max(1, round(n * scale)) for n in spec.points_per_class),
        )
        cloud = synth_scene(spec)
        save_cloud(cloud, args.out)
        print(f"wrote {args.out} ({len(cloud)} points, {cloud.num_classes} classes)")
    elif cmd == "label-sample":
        cloud = load_cloud(args.cloud, _detect_format(args.cloud))
        labels = sample_sparse_labels(cloud, args.ratio, args.seed)
        export_label_file(labels, args.out)
        print(f"wrote {args.out} ({len(labels)} labels)")
    elif cmd == "train":
        cloud = load_cloud(args.cloud, _detect_format(args.cloud))
        labels = import_label_file(args.labels, n=len(cloud), num_classes=cloud.num_classes)
        enc, qc, tc = parse_config_file(args.config)
        model = train(cloud, labels, enc, qc, tc, log_path=args.log)
        save_model(model, args.out)
        last = model.train_log.rows[-1] if model.train_log.rows else None
        print(f"wrote {args.out}" + (f" (final loss {last[1]:.4f})" if last else ""))
    elif cmd == "infer":
        model = load_model(args.ckpt)
        support = load_cloud(args.cloud, _detect_format(args.cloud))
        model.attach(support)
        positions = _load_queries(args.queries) if args.queries else support.positions
        pred = predict(model, positions)
        with open(args.out, "w") as f:
            f.writelines(f"{int(c)}\n" for c in pred)
        print(f"wrote {args.out} ({len(pred)} predictions)")
    elif cmd == "eval":
        model = load_model(args.ckpt)
        cloud = load_cloud(args.cloud, _detect_format(args.cloud))
        report = eval_report(model, cloud, boundary_radii=args.boundary_radius)
        with open(args.out, "w") as f:
            f.write(report.to_csv())
        print(f"oa={report.overall['oa']:.4f} miou={report.overall['miou']:.4f} -> {args.out}")
    elif cmd in ("sweep-ratio", "ablate-levels", "sweep-k", "sweep-seeds"):
        cloud = _experiment_cloud(args)
        enc, qc, tc = parse_config_file(args.config)
        if cmd == "sweep-ratio":
            ratios = [float(r) for r in args.ratios.split(",")]
            result = degradation_sweep(cloud, ratios, enc, qc, tc)
        elif cmd == "ablate-levels":
            result = query_level_ablation(cloud, enc, qc, tc, args.ratio, n_seeds=args.seeds)
        elif cmd == "sweep-k":
            ks = [int(k) for k in args.ks.split(",")]
            result = k_sweep(cloud, enc, qc, tc, args.ratio, ks=ks)
        else:
            result = seed_sensitivity(cloud, enc, qc, tc, args.ratio, n_seeds=args.seeds)
        result.write(args.out)
        print(f"wrote {args.out}/{result.name}.csv")
    elif cmd == "serve":
        cloud = load_cloud(args.cloud, _detect_format(args.cloud))
        names = args.class_names.split(",") if args.class_names else None
        server = serve_annotation(cloud, args.ratio, args.out, port=args.port,
                                  seed=args.seed, class_names=names,
                                  frontend_dir=args.frontend)
        print(f"annotation service on http://127.0.0.1:{server.port} "
              f"({len(server.state.candidates)} candidates); Ctrl-C to stop")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
