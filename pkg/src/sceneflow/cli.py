"""Command-line entry point: ``sceneflow {gen-data,train,eval,infer,bench}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .harness.bench import benchmark_density
from .harness.evaluation import evaluate, inference_scales, load_model, predict
from .harness.scene_io import read_scene, write_scene
from .harness.synthetic import Scene, SyntheticSceneSpec
from .harness.training import synthetic_dataset, train

METRICS_HEADER = [
    "epe3d",
    "acc3ds",
    "acc3dr",
    "epe3d_noc",
    "acc3ds_noc",
    "acc3dr_noc",
    "runtime_ms",
    "peak_bytes",
    "scenes",
]


def _csv_list(text: str, cast=str) -> list:
    return [cast(p) for p in text.split(",") if p.strip()]


def cmd_gen_data(args) -> int:
    spec = load_config(SyntheticSceneSpec, args.spec) if args.spec else SyntheticSceneSpec()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(synthetic_dataset(spec, args.count, args.seed)):
        write_scene(out / f"scene_{i:05d}.sfpc", scene)
    print(f"wrote {args.count} scenes to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(TrainConfig, args.config)
    path = train(cfg, out=args.out)
    print(f"checkpoint written to {path}")
    return 0


def cmd_eval(args) -> int:
    report = evaluate(args.ckpt, args.data, sampler=args.sampler, k=args.kp, seed=args.seed)
    row = report.as_dict()
    stream = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        writer = csv.DictWriter(stream, fieldnames=METRICS_HEADER)
        writer.writeheader()
        writer.writerow({k: "" if row[k] is None else row[k] for k in METRICS_HEADER})
    finally:
        if args.csv:
            stream.close()
    return 0


def cmd_infer(args) -> int:
    model = load_model(args.ckpt)
    scene = read_scene(args.inp)
    flow = predict(model, scene, inference_scales(model, args.sampler, args.kp), args.seed)
    # the flow file is a scene file whose flow slot holds the prediction
    write_scene(args.out, Scene(scene.p, scene.q, flow, scene.occluded))
    print(f"flow for {len(flow)} points written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    rows = benchmark_density(
        args.ckpt,
        _csv_list(args.densities, int),
        _csv_list(args.samplers),
        args.csv,
        seed=args.seed,
    )
    for row in rows:
        print(",".join(str(row[k]) for k in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sceneflow", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic scene pairs")
    p.add_argument("--spec", help="key=value synthetic scene spec")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="key=value training config")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a scene directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sampler", choices=["rs", "fps"])
    p.add_argument("--kp", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the metrics row here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict flow for one scene file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sampler", choices=["rs", "fps"])
    p.add_argument("--kp", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="accuracy/runtime/memory over input densities")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--densities", default="8192,16384,32768,65536,131072")
    p.add_argument("--samplers", default="rs,fps")
    p.add_argument("--csv")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
