"""Multi-seed pilot of the main regime comparison; prints per-seed finals
and paired directional stats. Development aid, mirrors the acceptance suite."""

import json
import multiprocessing as mp
import sys
import time
from pathlib import Path

import numpy as np

from negolab import experiments as X


N_DIALOGUES = 1000


def run_seed(args):
    seed, out_root, conditions, epochs, episodes = args
    base = dict(
        epochs=epochs,
        episodes_per_epoch=episodes,
        corpus=X.CorpusSpec(n_dialogues=N_DIALOGUES, seed=1000 + seed),
        eval=X.EvalSpec(n_contexts=100, seeds=2, final_seeds=2),
    )
    results = {}
    assets_by_mode = {}
    for name, overrides in conditions.items():
        cfg = X.ExperimentConfig(seed=seed, **base, **overrides)
        mode = cfg.regime in ("rl-random-init", "ta-random-init")
        if mode not in assets_by_mode:
            assets_by_mode[mode] = X.prepare_assets(cfg)
        run_dir = Path(out_root) / f"seed{seed}" / name
        X.run_experiment(cfg, run_dir, assets=assets_by_mode[mode])
        final = json.load(open(run_dir / "eval.json"))
        trace = [l.split(",") for l in open(run_dir / "trace.csv").read().splitlines()]
        cols = trace[0]
        rows = [dict(zip(cols, r)) for r in trace[1:]]
        novelty0 = float(rows[0]["novelty"])
        noveltyT = float(rows[-1]["novelty"])
        results[name] = {
            "advantage": final["advantage"],
            "pareto": final["pareto_rate"],
            "agreement": final["agreement_rate"],
            "novelty": final["novelty"],
            "mean_length": final["mean_length"],
            "novelty_delta": noveltyT - novelty0,
        }
        acq = Path(run_dir) / "acquisition.csv"
        if acq.exists():
            lines = [l.split(",") for l in acq.read_text().splitlines()[1:]]
            results[name]["fractions"] = [float(r[2]) for r in lines]
    return seed, results


CONDITIONS = {
    "sl": dict(regime="sl"),
    "rl": dict(regime="rl"),
    "rlsl4": dict(regime="rl+sl", period=4),
    "ta2": dict(regime="ta"),
    "ta1": dict(regime="ta", acquisition=X.AcquisitionSpec(order="first")),
    "bonus": dict(regime="rl-engineered", rl=X.RLSpec(reward_variant="pareto-bonus")),
    "rl_rand": dict(regime="rl-random-init"),
    "ta_rand": dict(regime="ta-random-init"),
}


def main():
    seeds = [int(s) for s in sys.argv[1].split(",")] if len(sys.argv) > 1 else list(range(6))
    out_root = sys.argv[2] if len(sys.argv) > 2 else "/tmp/pilot_trends"
    t0 = time.time()
    with mp.get_context("spawn").Pool(2) as pool:
        rows = dict(pool.map(run_seed, [(s, out_root, CONDITIONS, 6, 500) for s in seeds]))
    print(f"total {time.time()-t0:.0f}s")
    names = list(CONDITIONS)
    for metric in ("advantage", "pareto", "agreement", "novelty", "novelty_delta", "mean_length"):
        print(f"\n{metric}:")
        for name in names:
            vals = [rows[s][name][metric] for s in seeds]
            vals = [v if v is not None else float("nan") for v in vals]
            print(f"  {name:6s} mean={np.nanmean(vals):+.3f}  " + " ".join(f"{v:+.2f}" for v in vals))
    print("\nannotated fractions per epoch (mean over seeds):")
    fr = np.array([rows[s]["ta2"]["fractions"] for s in seeds])
    print("  ", np.round(fr.mean(axis=0), 3))

    def paired(a, b, label):
        def g(c, s):
            v = rows[s][c][metric_key]
            return v if v is not None else np.nan
        d = np.array([g(a, s) - g(b, s) for s in seeds])
        d = d[~np.isnan(d)]
        boot = np.random.default_rng(0).choice(d, size=(10000, len(d)), replace=True).mean(axis=1)
        p = float((boot <= 0).mean())
        print(f"  {label}: mean diff {d.mean():+.3f}, bootstrap P(<=0)={p:.3f}")

    print("\npaired one-sided bootstrap:")
    metric_key = "advantage"; paired("rl", "sl", "adv RL>SL"); paired("ta2", "rlsl4", "adv TA>RL+SL")
    metric_key = "pareto"; paired("ta2", "rl", "pareto TA>RL")
    metric_key = "agreement"; paired("ta2", "rl", "agree TA>RL")
    metric_key = "novelty_delta"
    paired("rl", "rlsl4", "dNov RL>RL+SL"); paired("ta2", "rlsl4", "dNov TA>RL+SL")
    print("\nfirst vs second order (directional):")
    for mk in ("advantage", "pareto", "agreement"):
        a1 = np.mean([rows[s]["ta1"][mk] for s in seeds])
        a2 = np.mean([rows[s]["ta2"][mk] for s in seeds])
        print(f"  {mk}: first={a1:+.3f} second={a2:+.3f}")
    print("engineered (directional):")
    for mk in ("agreement", "pareto", "advantage"):
        b = np.mean([rows[s]["bonus"][mk] for s in seeds])
        r = np.mean([rows[s]["rl"][mk] for s in seeds])
        print(f"  {mk}: bonus={b:+.3f} plain={r:+.3f}")
    print("random init:")
    for mk in ("mean_length", "advantage"):
        tr = np.mean([rows[s]["ta_rand"][mk] for s in seeds])
        rr = np.mean([rows[s]["rl_rand"][mk] for s in seeds])
        print(f"  {mk}: ta_rand={tr:+.3f} rl_rand={rr:+.3f}")
    fr2 = np.array([rows[s]["ta_rand"]["fractions"] for s in seeds])
    print("  ta_rand fractions:", np.round(fr2.mean(axis=0), 3))
    # per-epoch advantage trajectories for the random-init criterion
    import csv as _csv
    for cond in ("rl_rand", "ta_rand"):
        curves = []
        for s in seeds:
            path = Path(out_root) / f"seed{s}" / cond / "trace.csv"
            rows_ = list(_csv.DictReader(open(path)))
            curves.append([float(r["advantage"]) for r in rows_])
        arr = np.array(curves).mean(axis=0)
        print(f"  {cond} advantage per epoch:", np.round(arr, 2))


if __name__ == "__main__":
    main()
