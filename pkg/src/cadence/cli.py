"""Command-line interface.

Subcommands: gen-data, train-align, train-m2d, train-ssr, sample, eval,
plot-data, sweep-s. Global flags: --config (key=value file), --seed,
--out. Report-producing commands render matplotlib figures next to their
delimited/JSON outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import load_config, save_config
from .motion_io import load_motion
from .pipeline import Checkpoints


def _run_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cadence",
        description="Cascaded diffusion pipeline for rhythm-aligned motion generation.",
    )
    parser.add_argument("--config", default=None, help="key=value run config file")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--out", default="runs/default", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate the synthetic dataset")

    sub.add_parser("train-align", help="train the audio-motion adapter")

    p = sub.add_parser("train-m2d", help="train the base music-to-dance stage")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("train-ssr", help="train the super-resolution stage")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("sample", help="generate motion for an audio sidecar")
    p.add_argument("--audio", required=True, help="clip sidecar JSON with audio_feature")
    p.add_argument("--duration", type=float, default=4.0, help="seconds to generate")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--seed-motion", default=None, help="optional .mot prefix to inpaint")
    p.add_argument("--output", default=None, help="output .mot path")

    p = sub.add_parser("eval", help="evaluate generated clips against references")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--skeleton", default=None)

    p = sub.add_parser("plot-data", help="export kinetic velocity / beat table")
    p.add_argument("--motion", required=True, help=".mot file to analyze")
    p.add_argument("--beats", default=None, help="sidecar JSON with music beats")
    p.add_argument("--skeleton", default=None)

    p = sub.add_parser("sweep-s", help="sweep the SSR conditioning-augmentation level")
    p.add_argument("--data", default=None, help="dataset dir (default <out>/data)")
    p.add_argument("--clips", type=int, default=8)

    args = parser.parse_args(argv)
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    ckpts = Checkpoints.in_dir(out)

    if args.command == "gen-data":
        manifest = pipeline.cmd_gen_data(cfg, data_dir)
        save_config(cfg, out / "run.cfg")
        print(f"wrote {len(manifest['clips'])} clips to {data_dir}")

    elif args.command == "train-align":
        _, history = pipeline.cmd_train_align(cfg, data_dir, ckpts.align)
        print(f"adapter saved to {ckpts.align} (final loss {history[-1]:.4f})")

    elif args.command == "train-m2d":
        log = out / "m2d_train.csv"
        art = pipeline.cmd_train_m2d(cfg, data_dir, ckpts.align, ckpts.m2d,
                                     log_path=log, steps=args.steps,
                                     resume_from=args.resume)
        _render_loss(log)
        print(f"m2d checkpoint at step {art.step} saved to {ckpts.m2d}")

    elif args.command == "train-ssr":
        log = out / "ssr_train.csv"
        art = pipeline.cmd_train_ssr(cfg, data_dir, ckpts.align, ckpts.ssr,
                                     log_path=log, steps=args.steps,
                                     resume_from=args.resume)
        _render_loss(log)
        print(f"ssr checkpoint at step {art.step} saved to {ckpts.ssr}")

    elif args.command == "sample":
        meta = json.loads(Path(args.audio).read_text())
        feature = np.asarray(meta["audio_feature"])
        beats = None
        if meta.get("beats"):
            from .motion import BeatGrid

            beats = BeatGrid(np.asarray(meta["beats"]), meta.get("duration_s", meta["beats"][-1]))
        seed_motion = load_motion(args.seed_motion) if args.seed_motion else None
        out_path = Path(args.output) if args.output else out / "samples" / "sample.mot"
        motion = pipeline.cmd_sample(
            cfg, ckpts, feature, args.duration, out_path=out_path,
            seed=args.sample_seed, seed_motion=seed_motion, music_beats=beats,
        )
        print(f"wrote {motion.length} frames at {motion.fps} fps to {out_path}")

    elif args.command == "eval":
        report_path = out / "eval_report.json"
        report = pipeline.cmd_eval(
            args.generated, args.reference, args.skeleton or cfg.skeleton, report_path
        )
        print(json.dumps(report, sort_keys=True, indent=1))

    elif args.command == "plot-data":
        csv_path = out / "plot_data.csv"
        rows = pipeline.cmd_plot_data(args.motion, args.beats, csv_path,
                                      args.skeleton or cfg.skeleton)
        print(f"wrote {len(rows)} rows to {csv_path}")

    elif args.command == "sweep-s":
        rows = pipeline.cmd_sweep_augmentation(
            cfg, ckpts, args.data or data_dir, out / "sweep_s.csv", n_clips=args.clips
        )
        for r in rows:
            print(f"s={r['s']:>3}  fid_k={r['fid_k']:.4f}  div_k={r['div_k']:.4f}  "
                  f"bas={r['bas']:.4f}")

    return 0


def _render_loss(log_csv: Path) -> None:
    if log_csv.exists():
        from .plotting import save_loss_curves

        save_loss_curves(log_csv, log_csv.with_suffix(".png"))


if __name__ == "__main__":
    sys.exit(main())
