"""Command-line experiment runner.

Subcommands: gen-corpus, train, sweep, eval, stats, plot, serve. Configs are
JSON files mirroring `experiments.ExperimentConfig`; --set flags override
individual (possibly dotted) fields. Exit codes: 0 success, 1 config error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path: str | None, overrides: list[str]):
    from . import experiments as X

    data = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = X.ExperimentConfig.from_dict(data) if data else X.ExperimentConfig()
    if overrides:
        as_dict = base.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects field=value, got {item!r}")
            field, raw = item.split("=", 1)
            try:
                X.set_config_field(as_dict, field, _parse_value(raw))
            except KeyError as exc:
                raise ConfigError(str(exc)) from exc
        base = X.ExperimentConfig.from_dict(as_dict)
    try:
        base.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return base


def cmd_gen_corpus(args) -> int:
    from . import corpus as corpus_mod

    rng = np.random.default_rng(args.seed)
    weights = json.loads(args.weights) if args.weights else None
    full = corpus_mod.generate_synthetic_corpus(rng, args.n, style_weights=weights)
    corpus_mod.save_corpus(full, args.out)
    print(f"wrote {len(full)} dialogues to {args.out}")
    if args.low_out:
        low = corpus_mod.filter_by_quality(full, args.threshold)
        corpus_mod.save_corpus(low, args.low_out)
        print(f"wrote {len(low)} low-quality dialogues (threshold {args.threshold}) to {args.low_out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from . import experiments as X

    config = load_config(args.config, args.set or [])
    X.run_experiment(config, args.out, progress=print if not args.quiet else None)
    print(f"run directory: {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import experiments as X
    from . import plotting

    base = load_config(args.config, args.set or [])
    values = [_parse_value(v) for v in args.values]
    root = X.run_sweep(base, args.axis, values, args.out, parallelism=args.parallelism)
    print(f"sweep summary: {root / 'summary.csv'}")
    if args.plot:
        out = plotting.plot_sweep(root / "summary.csv", root / "sweep.png")
        print(f"sweep plot: {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import metrics, model as model_mod

    alice = model_mod.load_model(args.model)
    partner = model_mod.load_model(args.partner)
    report = metrics.evaluate_pairing(
        alice,
        partner,
        n_contexts=args.contexts,
        seeds=args.seeds,
        rng=np.random.default_rng(args.seed),
        greedy=args.greedy,
    )
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    from . import corpus as corpus_mod

    loaded = corpus_mod.load_corpus(args.corpus)
    stats = corpus_mod.corpus_stats(loaded)
    print(json.dumps(dataclass_dict(stats), indent=2, sort_keys=True))
    return EXIT_OK


def dataclass_dict(obj):
    import dataclasses

    return dataclasses.asdict(obj)


def cmd_plot(args) -> int:
    from . import plotting

    traces = {}
    for item in args.trace:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            label, path = Path(item).parent.name, item
        traces[label] = Path(path)
    out = plotting.plot_curves(traces, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .arena import build_app

    app = build_app(
        registry_path=args.registry,
        data_dir=args.data_dir,
        include_practice=not args.no_practice,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="negolab", description="Negotiation-agent laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic negotiation corpus")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", help="JSON style-weight object")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--low-out", help="also write the filtered low-quality subset here")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="run one training regime end-to-end")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="override a config field")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run one experiment per value of a config field")
    p.add_argument("--config", help="base JSON experiment config")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE")
    p.add_argument("--axis", required=True, help="dotted config field, e.g. acquisition.function")
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a saved model against a partner model")
    p.add_argument("--model", required=True)
    p.add_argument("--partner", required=True)
    p.add_argument("--contexts", type=int, default=100)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="summary statistics of a corpus file")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plot", help="plot four-panel training curves from trace.csv files")
    p.add_argument("--trace", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("serve", help="serve the live human-vs-agent negotiation arena")
    p.add_argument("--registry", required=True, help="JSON model registry file")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--no-practice", action="store_true")
    p.add_argument("--ui", help="serve a built web client from this directory at /app")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
