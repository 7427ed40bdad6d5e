"""Command-line entry points.

Exit codes: 0 success, 1 usage or config error (bad flags, unknown config
keys, missing inputs), 2 runtime failure mid-pipeline.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio import VadConfig
from .corpus import CONFIGURATIONS, Manifest, build_configuration, generate_corpus
from .features import FeatureConfig
from .harness import (
    ConfigError,
    ExperimentConfig,
    load_config,
    materialize_trim,
    render_outputs,
    run_both_phases,
    run_loss_comparison,
    run_matrix,
)
from .losses import KINDS as LOSS_KINDS
from .metrics import ScoreSet, compute_eer
from .model import TrainConfig, load_checkpoint, save_checkpoint, score_manifest, train


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2 (2 is reserved for runtime failures)
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="spoofprobe", description="Class-wise intervention probes for bonafide/spoof classifiers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, help_text: str, config: bool = True, seed: bool = True, out: bool = True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=False, help="TOML experiment config")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        return p

    add("gen-data", "synthesize the corpus and write its manifest")

    p = add("intervene", "materialize one configuration from a corpus manifest")
    p.add_argument("--manifest", required=True, help="corpus manifest.jsonl")
    p.add_argument("--configuration", required=True, choices=CONFIGURATIONS)

    p = add("trim", "write silence-trimmed copies of a manifest", seed=False)
    p.add_argument("--manifest", required=True)

    p = add("train", "train a classifier on every entry of a manifest")
    p.add_argument("--manifest", required=True)

    p = add("evaluate", "print the EER of a checkpoint on a manifest", config=False, seed=False, out=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--phase", choices=("train", "test"), default=None, help="restrict to one phase")

    p = add("run-matrix", "run the full configuration matrix and write the report")
    p.add_argument("--mode", choices=("matrix", "both-phases"), default="matrix")

    p = add("loss-compare", "train each criterion on the untouched corpus and compare EERs")
    p.add_argument("--kinds", nargs="+", choices=LOSS_KINDS, default=list(LOSS_KINDS))

    p = add("report", "re-render report.csv and figures from report.json", config=False, seed=False)
    return parser


def _need_config(args: argparse.Namespace, parser: _Parser) -> ExperimentConfig:
    if not args.config:
        parser.error(f"{args.command} requires --config")
    return load_config(args.config, seed_override=args.seed)


def _cmd_gen_data(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    manifest = generate_corpus(cfg.n_bonafide, cfg.n_spoof, cfg.synth, cfg.bias, cfg.seed, args.out)
    print(f"wrote {len(manifest.entries)} items to {Path(args.out) / 'manifest.jsonl'}")


def _cmd_intervene(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    manifest = Manifest.load(args.manifest)
    built = build_configuration(args.configuration, manifest, cfg.intervention, cfg.seed, args.out)
    n = sum(e.intervened for e in built.entries)
    print(f"configuration {args.configuration}: {n} intervened items, manifest at {Path(args.out) / 'manifest.jsonl'}")


def _cmd_trim(args: argparse.Namespace, vad: VadConfig) -> None:
    manifest = Manifest.load(args.manifest)
    trimmed, audit = materialize_trim(manifest, vad, args.out)
    n_silent = sum(row["fully_silent"] for row in audit.values())
    print(f"trimmed {len(trimmed.entries)} items ({n_silent} fully silent), manifest at {Path(args.out) / 'manifest.jsonl'}")


def _cmd_train(args: argparse.Namespace, cfg: ExperimentConfig | None) -> None:
    if cfg is not None:
        tc, features = cfg.train, cfg.features
    else:
        tc, features = TrainConfig(seed=args.seed or 0), FeatureConfig()
    manifest = Manifest.load(args.manifest)
    params, telemetry = train(manifest, tc, features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ck = save_checkpoint(params, out / "checkpoint.json")
    telemetry.write_csv(out / "telemetry.csv")
    print(f"checkpoint at {ck}")


def _cmd_evaluate(args: argparse.Namespace) -> None:
    params = load_checkpoint(args.checkpoint)
    manifest = Manifest.load(args.manifest)
    if args.phase is not None:
        manifest = Manifest(manifest.subset(args.phase), manifest.root)
    scores, labels = score_manifest(params, manifest)
    eer, _ = compute_eer(ScoreSet(scores[labels == 0], scores[labels == 1]))
    print(f"EER: {100.0 * eer:.2f}%")


def _cmd_run_matrix(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    runner = run_both_phases if args.mode == "both-phases" else run_matrix
    report = runner(cfg, args.out)
    for kind, by_cfg in sorted(report.results.items()):
        for config_id, result in sorted(by_cfg.items()):
            print(f"{kind}/{config_id}: EER {100.0 * result.eer:.2f}%")
        ratio = report.ratios.get(kind)
        if ratio is not None:
            print(f"{kind}/ratio: {ratio:.2f}")
    print(f"report at {Path(args.out) / 'report.json'}")


def _cmd_loss_compare(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    rows = run_loss_comparison(cfg, args.out, tuple(args.kinds))
    for kind, eer in rows:
        print(f"{kind}: EER {100.0 * eer:.2f}%")
    print(f"comparison at {Path(args.out) / 'loss_compare.csv'}")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("gen-data", "intervene", "run-matrix", "loss-compare"):
            cfg = _need_config(args, parser)
        elif args.command in ("trim", "train") and args.config:
            seed = getattr(args, "seed", None)
            cfg = load_config(args.config, seed_override=seed)
        else:
            cfg = None
    except (ConfigError, FileNotFoundError) as exc:
        print(f"spoofprobe: error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "gen-data":
            _cmd_gen_data(cfg, args)
        elif args.command == "intervene":
            _cmd_intervene(cfg, args)
        elif args.command == "trim":
            _cmd_trim(args, cfg.vad if cfg is not None else VadConfig())
        elif args.command == "train":
            _cmd_train(args, cfg)
        elif args.command == "evaluate":
            _cmd_evaluate(args)
        elif args.command == "run-matrix":
            _cmd_run_matrix(cfg, args)
        elif args.command == "loss-compare":
            _cmd_loss_compare(cfg, args)
        elif args.command == "report":
            render_outputs(args.out)
            print(f"rendered outputs under {args.out}")
    except (ConfigError,) as exc:
        print(f"spoofprobe: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"spoofprobe: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
