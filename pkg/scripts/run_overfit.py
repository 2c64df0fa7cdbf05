#!/usr/bin/env python3
"""Overfit experiment: synthesize a small corpus, train the toy encoder until
it memorizes the training set, then report micro P/R/F1 with breakdowns.

Runs the same pipeline as the CLI subcommands; everything is seeded.
"""

import argparse
import json
import tempfile
import time
from pathlib import Path

from relmap.cli import main as relmap_main


def run(args) -> None:
    workdir = Path(args.workdir or tempfile.mkdtemp(prefix="relmap-overfit-"))
    workdir.mkdir(parents=True, exist_ok=True)
    data = workdir / "train.jsonl"
    relmap_path = workdir / "relations.tsv"
    checkpoint = workdir / "model.rmk"
    pred = workdir / "pred.jsonl"
    report = workdir / "report.json"

    assert relmap_main(["make-synthetic", "--relations", "5", "--sentences",
                        str(args.sentences), "--vocab", "120", "--max-triples", "3",
                        "--overlap-mix", "normal,seo,epo,soo", "--seed", str(args.data_seed),
                        "--out-data", str(data), "--out-relmap", str(relmap_path)]) == 0

    config = {
        "encoder": {"layers": 4, "heads": 4, "d_model": 64, "d_head": 16,
                    "d_ff": 256, "dropout": 0.0, "max_len": 100},
        "train": {"learning_rate": 1e-3, "epochs": args.epochs, "batch_size": 8,
                  "seed": args.seed, "eval_every": args.eval_every, "threshold": 0.5},
        "dtype": "f32",
    }
    config_path = workdir / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")

    start = time.perf_counter()
    assert relmap_main(["train", "--data", str(data), "--relmap", str(relmap_path),
                        "--config", str(config_path), "--out-checkpoint",
                        str(checkpoint)]) == 0
    elapsed = time.perf_counter() - start
    assert relmap_main(["predict", "--checkpoint", str(checkpoint), "--data", str(data),
                        "--out", str(pred)]) == 0
    assert relmap_main(["eval", "--pred", str(pred), "--gold", str(data), "--relmap",
                        str(relmap_path), "--out-json", str(report)]) == 0
    overall = json.loads(report.read_text())["overall"]
    print(f"\ntraining wall clock: {elapsed:.1f} s for {args.epochs} epochs")
    print(f"training-set micro F1: {overall['f1']:.4f}")
    print(f"artifacts in {workdir}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sentences", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--data-seed", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eval-every", type=int, default=20)
    parser.add_argument("--workdir")
    run(parser.parse_args())
