"""Experiment runner: named training regimes wired end-to-end.

A run takes one `ExperimentConfig`, builds (or loads) the synthetic corpus,
its low-quality subset, the simulated expert and the starting model, trains
the requested regime, evaluates against the expert after every epoch, and
writes a reproducible run directory:

    manifest.json     config + hash (no timestamps; reruns are byte-identical)
    trace.csv         per-epoch evaluation metrics (epoch 0 = initialization)
    acquisition.csv   per-epoch annotation stats (targeted-acquisition runs)
    eval.json         final evaluation report
    models/           expert, initial and final models

All randomness derives from the config: corpus, expert, initial model and
evaluation contexts depend only on the corpus seed (so different regimes at
the same seed share them); episode randomness depends on the run seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, acquisition, corpus as corpus_mod, env, metrics, model as model_mod, training
from .acquisition import AcquisitionConfig
from .corpus import Corpus
from .metrics import EvalReport
from .model import PolicyModel
from .training import RLConfig, SLConfig, Schedule

REGIMES = (
    "sl",
    "rl",
    "rl+sl",
    "ta",
    "rl-random-init",
    "ta-random-init",
    "rl-engineered",
)

TRACE_COLUMNS = ("epoch", "advantage", "pareto", "agreement", "novelty", "mean_length", "mean_reward")
ACQUISITION_COLUMNS = ("epoch", "n_annotated", "mean_annotated_fraction", "dprime_advantage", "dprime_pareto")


@dataclass
class CorpusSpec:
    n_dialogues: int = 2000
    quality_threshold: float = 0.5
    seed: Optional[int] = None  # defaults to the run seed
    path: Optional[str] = None  # load the full corpus from a file instead


@dataclass
class ModelSpec:
    hidden: int = 64
    init_scale: float = 0.1


@dataclass
class SLSpec:
    alpha: float = 0.5
    batch_size: int = 16
    lr: float = 0.5
    anneal: float = 0.5
    expert_epochs: int = 8
    init_epochs: int = 8
    retrain_epochs: int = 6

    def config(self, epochs: int) -> SLConfig:
        return SLConfig(
            alpha=self.alpha, batch_size=self.batch_size, epochs=epochs, lr=self.lr, anneal=self.anneal
        )


@dataclass
class RLSpec:
    gamma: float = 0.95
    lr: float = 0.12
    lr_anneal: float = 0.7
    reward_variant: str = "plain"

    def config(self) -> RLConfig:
        return RLConfig(
            gamma=self.gamma, lr=self.lr, lr_anneal=self.lr_anneal, reward_variant=self.reward_variant
        )


@dataclass
class AcquisitionSpec:
    function: str = "likelihood"
    k: int = 50
    order: str = "second"

    def config(self, init_scale: float) -> AcquisitionConfig:
        return AcquisitionConfig(
            function=self.function, k=self.k, order=self.order, retrain_init_scale=init_scale
        )


@dataclass
class EvalSpec:
    n_contexts: int = 100
    seeds: int = 1
    final_seeds: int = 2
    greedy: bool = False


@dataclass
class ExperimentConfig:
    seed: int = 0
    regime: str = "ta"
    epochs: int = 6
    episodes_per_epoch: int = 500
    period: Optional[int] = None  # rl+sl: one SL pass every `period` episodes
    t_max: int = env.DEFAULT_T_MAX
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    sl: SLSpec = field(default_factory=SLSpec)
    rl: RLSpec = field(default_factory=RLSpec)
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    eval: EvalSpec = field(default_factory=EvalSpec)
    expert_path: Optional[str] = None  # pre-trained expert model file
    init_path: Optional[str] = None  # pre-trained starting model file

    def validate(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.regime == "rl+sl":
            if self.period is None:
                raise ValueError("regime 'rl+sl' requires a period")
            total = self.epochs * self.episodes_per_epoch
            if not 1 <= self.period <= total:
                raise ValueError(f"period must lie in 1..{total}")
        if self.epochs <= 0 or self.episodes_per_epoch <= 0:
            raise ValueError("epochs and episodes_per_epoch must be positive")
        if self.regime == "rl-engineered" and self.rl.reward_variant == "plain":
            raise ValueError("regime 'rl-engineered' requires a non-plain reward variant")
        RLConfig(gamma=self.rl.gamma, lr=self.rl.lr, reward_variant=self.rl.reward_variant)
        if not 0.0 < self.corpus.quality_threshold <= 1.0:
            raise ValueError("quality threshold must lie in (0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        for key, sub in (
            ("corpus", CorpusSpec),
            ("model", ModelSpec),
            ("sl", SLSpec),
            ("rl", RLSpec),
            ("acquisition", AcquisitionSpec),
            ("eval", EvalSpec),
        ):
            if key in data and isinstance(data[key], dict):
                data[key] = sub(**data[key])
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _seed_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


@dataclass
class RunAssets:
    """Everything a regime starts from; shared across regimes per corpus seed."""

    full: Corpus
    low: Corpus
    expert: PolicyModel
    init: PolicyModel
    eval_pairs: list


def prepare_assets(config: ExperimentConfig) -> RunAssets:
    corpus_seed = config.corpus.seed if config.corpus.seed is not None else config.seed
    if config.corpus.path:
        full = corpus_mod.load_corpus(config.corpus.path, provenance="synthetic-high")
    else:
        full = corpus_mod.generate_synthetic_corpus(
            _seed_rng(corpus_seed, 0), config.corpus.n_dialogues, t_max=config.t_max
        )
    low = corpus_mod.filter_by_quality(full, config.corpus.quality_threshold)

    if config.expert_path:
        expert = model_mod.load_model(config.expert_path)
    else:
        expert = model_mod.init_model(
            _seed_rng(corpus_seed, 1), hidden=config.model.hidden, init_scale=config.model.init_scale
        )
        training.sl_train(expert, full, config.sl.config(config.sl.expert_epochs), _seed_rng(corpus_seed, 2))

    random_start = config.regime in ("rl-random-init", "ta-random-init")
    if config.init_path and not random_start:
        init = model_mod.load_model(config.init_path)
    else:
        init = model_mod.init_model(
            _seed_rng(corpus_seed, 3), hidden=config.model.hidden, init_scale=config.model.init_scale
        )
        if not random_start:
            training.sl_train(init, low, config.sl.config(config.sl.init_epochs), _seed_rng(corpus_seed, 4))

    eval_rng = _seed_rng(corpus_seed, 5)
    eval_pairs = [env.sample_context_pair(eval_rng) for _ in range(config.eval.n_contexts)]
    return RunAssets(full=full, low=low, expert=expert, init=init, eval_pairs=eval_pairs)


def _epoch_eval(
    alice: PolicyModel, assets: RunAssets, config: ExperimentConfig, epoch: int, n_seeds: int
) -> dict:
    rows = []
    for s in range(n_seeds):
        rng = _seed_rng(config.seed, 100 + epoch, s)
        records = [
            metrics.play_eval_episode(
                alice, assets.expert, pair, rng, t_max=config.t_max, greedy=config.eval.greedy
            )
            for pair in assets.eval_pairs
        ]
        p_rate = metrics.pareto_rate(records)
        rows.append(
            {
                "advantage": metrics.advantage(records),
                "pareto": p_rate if p_rate is not None else float("nan"),
                "agreement": metrics.agreement_rate(records),
                "novelty": metrics.novelty(records, assets.expert),
                "mean_length": metrics.mean_length(records),
                "mean_reward": float(np.mean([r.outcome.score_a for r in records])),
            }
        )
    merged = {}
    for key in rows[0]:
        values = np.array([r[key] for r in rows], dtype=float)
        finite = values[~np.isnan(values)]
        merged[key] = float(finite.mean()) if finite.size else float("nan")
    merged["epoch"] = epoch
    return merged


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if np.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(c)) for c in columns) + "\n")


def run_experiment(
    config: ExperimentConfig,
    out_dir,
    assets: Optional[RunAssets] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> Path:
    """Execute one regime end-to-end; returns the run directory."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    if assets is None:
        assets = prepare_assets(config)

    def note(msg: str) -> None:
        if progress:
            progress(msg)

    alice = assets.init.clone()
    bob = assets.init.clone()
    train_rng = _seed_rng(config.seed, 10)
    trace_rows = [_epoch_eval(alice, assets, config, 0, config.eval.seeds)]
    acq_rows: list[dict] = []
    rl_config = config.rl.config()
    retrain_cfg = config.sl.config(config.sl.retrain_epochs)

    def on_eval(epoch: int, model: PolicyModel, train_stats=None) -> None:
        row = _epoch_eval(model, assets, config, epoch, config.eval.seeds)
        trace_rows.append(row)
        note(f"epoch {epoch}: advantage={row['advantage']:+.2f} agreement={row['agreement']:.2f}")

    if config.regime == "sl":
        sl_cfg = config.sl.config(1)
        for epoch in range(1, config.epochs + 1):
            training.sl_train(alice, assets.low, sl_cfg, train_rng)
            on_eval(epoch, alice)
    elif config.regime in ("rl", "rl-engineered", "rl-random-init", "rl+sl"):
        period = config.period if config.regime == "rl+sl" else None
        schedule = Schedule(total_episodes=config.epochs * config.episodes_per_epoch, period=period)
        training.rl_train(
            alice,
            bob,
            schedule,
            rl_config,
            config.sl.config(config.sl.init_epochs) if period else None,
            assets.low if period else None,
            train_rng,
            episodes_per_epoch=config.episodes_per_epoch,
            t_max=config.t_max,
            on_epoch=lambda e, m, s: on_eval(e, m, s),
        )
    elif config.regime in ("ta", "ta-random-init"):
        dataset = assets.low if config.regime == "ta" else Corpus(records=[], provenance="mixed")
        acq_cfg = config.acquisition.config(config.model.init_scale)

        def on_ta_epoch(epoch, al, bo, stats, report):
            acq_rows.append(
                {
                    "epoch": epoch,
                    "n_annotated": report.n_annotated,
                    "mean_annotated_fraction": report.mean_annotated_fraction,
                    "dprime_advantage": report.dprime_advantage,
                    "dprime_pareto": report.dprime_pareto,
                }
            )
            on_eval(epoch, al)

        alice, bob, dataset, _ = acquisition.ta_train(
            alice,
            bob,
            dataset,
            assets.expert,
            acq_cfg,
            rl_config,
            retrain_cfg,
            train_rng,
            epochs=config.epochs,
            episodes_per_epoch=config.episodes_per_epoch,
            t_max=config.t_max,
            on_epoch=on_ta_epoch,
        )
    else:  # pragma: no cover - validate() guards this
        raise ValueError(f"unhandled regime {config.regime}")

    final_eval = metrics.evaluate_pairing(
        alice,
        assets.expert,
        n_contexts=config.eval.n_contexts,
        seeds=config.eval.final_seeds,
        rng=_seed_rng(config.seed, 999),
        t_max=config.t_max,
        greedy=config.eval.greedy,
    )

    write_csv(out / "trace.csv", TRACE_COLUMNS, trace_rows)
    if config.regime in ("ta", "ta-random-init"):
        write_csv(out / "acquisition.csv", ACQUISITION_COLUMNS, acq_rows)
    with open(out / "eval.json", "w", encoding="utf-8") as fh:
        json.dump(final_eval.to_dict(), fh, indent=2, sort_keys=True)
    manifest = {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "package_version": __version__,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    model_mod.save_model(alice, out / "models" / "alice.npz")
    model_mod.save_model(bob, out / "models" / "bob.npz")
    model_mod.save_model(assets.expert, out / "models" / "expert.npz")
    note("run complete")
    return out


def set_config_field(data: dict, dotted: str, value) -> None:
    """Assign a possibly nested config field given a dotted path."""
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        node = node[part]
    if parts[-1] not in node:
        raise KeyError(f"unknown config field {dotted!r}")
    node[parts[-1]] = value


def _sweep_worker(args) -> dict:
    base_dict, axis, value, run_dir = args
    data = json.loads(json.dumps(base_dict))
    set_config_field(data, axis, value)
    config = ExperimentConfig.from_dict(data)
    try:
        run_experiment(config, run_dir)
        with open(Path(run_dir) / "eval.json", "r", encoding="utf-8") as fh:
            final = json.load(fh)
        row = {
            "axis": axis,
            "value": value,
            "status": "ok",
            "run_dir": str(run_dir),
            "error": "",
            "advantage": final["advantage"],
            "pareto": final["pareto_rate"],
            "agreement": final["agreement_rate"],
            "novelty": final["novelty"],
            "mean_length": final["mean_length"],
        }
    except Exception as exc:  # noqa: BLE001 - partial failures recorded, sweep continues
        row = {
            "axis": axis,
            "value": value,
            "status": "error",
            "run_dir": str(run_dir),
            "error": str(exc),
            "advantage": None,
            "pareto": None,
            "agreement": None,
            "novelty": None,
            "mean_length": None,
        }
    return row


SWEEP_COLUMNS = (
    "axis",
    "value",
    "status",
    "run_dir",
    "error",
    "advantage",
    "pareto",
    "agreement",
    "novelty",
    "mean_length",
)


def run_sweep(
    base: ExperimentConfig,
    axis: str,
    values: list,
    out_root,
    parallelism: int = 1,
) -> Path:
    """One run per axis value; failures are recorded and the sweep continues."""
    if not values:
        raise ValueError("sweep axis needs at least one value")
    base.validate()
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for value in values:
        token = str(value).replace("/", "_").replace(" ", "")
        jobs.append((base.to_dict(), axis, value, str(root / f"{axis.replace('.', '_')}={token}")))
    if parallelism > 1 and len(jobs) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(parallelism) as pool:
            rows = pool.map(_sweep_worker, jobs)
    else:
        rows = [_sweep_worker(job) for job in jobs]
    write_csv(root / "summary.csv", SWEEP_COLUMNS, rows)
    return root
