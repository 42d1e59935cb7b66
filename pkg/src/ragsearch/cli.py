"""Command-line entry point: ``ragsearch <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .controllers import ALGORITHMS, DISPLAY_NAMES
from .engine import EvalCache, Limits, RunRecord, run_search
from .environment import generate_synthetic, load_environment, load_synthetic, save_synthetic
from .gateway import gateway_from_config
from .metrics import MetricWeights, score_answer
from .reporting import (AblationSpec, ablation_study, aggregate_records, emit_plots, interaction_csv,
                        module_preferences, preferences_csv, random_baseline_delta, stability_study,
                        trajectory_csv, wins_and_ranks)
from .space import load_space

log = logging.getLogger("ragsearch")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_env_args(p):
    p.add_argument("--env", help="environment name (defaults to the QA file stem)")
    p.add_argument("--qa", help="QA file (one JSON record per line: id, question, answers)")
    p.add_argument("--corpus", help="corpus file (one JSON record per line: id, text)")
    p.add_argument("--synthetic", help="synthetic environment definition file")


def _add_run_args(p):
    p.add_argument("--space", default="default-text", help="space file or 'default-text'")
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout", type=float, default=None, help="per-config evaluation limit in seconds")
    p.add_argument("--cache", help="on-disk cache directory")
    p.add_argument("--gateway", help="gateway config file (default: deterministic mock)")
    p.add_argument("--weights", default="default", help="metric weights: 'default', JSON, or k=v,...")
    p.add_argument("--out", help="output directory")


def _load_env(args, entry=None):
    entry = entry or {"name": args.env, "qa": args.qa, "corpus": args.corpus, "synthetic": args.synthetic}
    if entry.get("synthetic"):
        senv = load_synthetic(entry["synthetic"])
        if entry.get("name"):
            senv.name = entry["name"]
        return senv
    if not (entry.get("qa") and entry.get("corpus")):
        raise SystemExit("an environment needs --qa and --corpus, or --synthetic")
    return load_environment(entry["qa"], entry["corpus"], name=entry.get("name"))


def _space_for(args, env):
    if args.space == "default-text" and hasattr(env, "unary_weights"):
        return env.space
    return load_space(args.space)


def _run_kwargs(args):
    return dict(gateway=gateway_from_config(args.gateway),
                cache=EvalCache(args.cache) if args.cache else EvalCache(),
                weights=MetricWeights.parse(args.weights),
                limits=Limits(workers=args.workers, timeout=args.timeout))


def _progress(trial):
    tag = " (cache)" if trial.cache_hit else " FAILED" if trial.failed else ""
    log.info("trial %2d reward %.4f%s", trial.index, trial.reward, tag)


def cmd_run(args):
    env = _load_env(args)
    space = _space_for(args, env)
    params = json.loads(args.params) if args.params else None
    rec = run_search(env, space, args.algo, args.seed, args.budget, params=params,
                     dump_traces=args.dump_traces, progress=_progress, **_run_kwargs(args))
    if args.out:
        rec.write(args.out)
    best = rec.best_trial
    print(json.dumps({"best_reward": best.reward, "best_index": best.index, "config": best.config.labels,
                      "eval_count": rec.eval_count, "total_time": round(rec.total_time, 3)}, sort_keys=True))


def _run_dir(out, env_name, alg, seed):
    return Path(out) / env_name / alg / f"seed{seed}"


def cmd_bench(args):
    manifest = json.loads(Path(args.manifest).read_text())
    base = Path(args.manifest).parent
    algorithms = manifest.get("algorithms", list(ALGORITHMS))
    seeds = manifest.get("seeds", [11, 22, 33])
    budget = manifest.get("budget", 30)
    if "weights" in manifest:
        args.weights = json.dumps(manifest["weights"]) if isinstance(manifest["weights"], dict) else manifest["weights"]
    kwargs = _run_kwargs(args)
    out = Path(args.out or "runs")
    records = []
    for entry in manifest["envs"]:
        entry = {k: (str(base / v) if k in ("qa", "corpus", "synthetic") else v) for k, v in entry.items()}
        env = _load_env(args, entry)
        space = env.space if (hasattr(env, "unary_weights") and "space" not in manifest) else \
            load_space(manifest.get("space", "default-text"))
        for alg in algorithms:
            for seed in seeds:
                rec = run_search(env, space, alg, seed, budget, **kwargs)
                rec.write(_run_dir(out, env.name, alg, seed))
                records.append(rec)
                log.info("%s %s seed %d best %.4f", env.name, alg, seed, rec.best_reward)
    envs = list(dict.fromkeys(r.env_name for r in records))
    sys.stdout.write(interaction_csv(aggregate_records(records), envs, algorithms))


def cmd_ablate(args):
    spec = json.loads(Path(args.spec).read_text())
    specs = [AblationSpec.from_dict(d) for d in spec["ablations"]]
    env = _load_env(args)
    space = _space_for(args, env)
    rows = ablation_study(env, space, specs, spec.get("algorithms", ["random"]), spec.get("seeds", [11, 22, 33]),
                          spec.get("budget", args.budget), **_run_kwargs(args))
    print("variant,algorithm,mean,delta")
    for r in rows:
        print(f"{r.variant},{r.algorithm},{r.mean:.4f},{r.delta:+.4f}")


def cmd_stability(args):
    env = _load_env(args)
    space = _space_for(args, env)
    rows = stability_study(env, _int_list(args.sizes), args.algos.split(","), _int_list(args.seeds),
                           args.budget, space=space, **_run_kwargs(args))
    print("size,algorithm,mean,std")
    for r in rows:
        print(f"{r.size},{r.algorithm},{r.mean:.4f},{r.std:.4f}")


def cmd_report(args):
    records = [RunRecord.read(p.parent) for p in sorted(Path(args.runs).rglob("run.meta"))]
    if not records:
        raise SystemExit(f"no runs found under {args.runs}")
    envs = list(dict.fromkeys(r.env_name for r in records))
    algs = [a for a in ALGORITHMS if any(r.algorithm == a for r in records)]
    what = args.what or "interaction"
    if what == "interaction":
        sys.stdout.write(interaction_csv(aggregate_records(records), envs, algs))
    elif what == "preferences":
        best = {a: [r.best_trial.config for r in records if r.algorithm == a] for a in algs}
        sys.stdout.write(preferences_csv(module_preferences(best)))
    elif what == "trajectories":
        for r in records:
            print(f"# {r.env_name} {DISPLAY_NAMES.get(r.algorithm, r.algorithm)} seed {r.seed}")
            sys.stdout.write(trajectory_csv(r))
    elif what == "baseline":
        baseline, deltas = random_baseline_delta(records)
        print(f"baseline,{baseline:.4f}")
        for a in sorted(deltas, key=lambda k: -deltas[k]):
            print(f"{DISPLAY_NAMES.get(a, a)},{deltas[a] + baseline:.4f},{deltas[a]:+.4f}")
    if args.emit:
        emit_plots(records, args.emit, envs, algs, render=args.render)


def _read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_score(args):
    preds = _read_jsonl(args.pred)
    refs = {r["id"]: r.get("answers", r.get("references")) for r in _read_jsonl(args.ref)}
    weights = MetricWeights.parse(args.weights)
    reports = []
    for p in preds:
        if p["id"] not in refs:
            raise SystemExit(f"prediction {p['id']!r} has no reference record")
        rep = score_answer(p.get("prediction", p.get("answer", "")), refs[p["id"]], weights, raw=args.raw_tokens)
        reports.append(rep)
        print(json.dumps({"id": p["id"], **rep.to_dict()}, sort_keys=True))
    from .metrics import mean_report

    print(json.dumps({"id": "__aggregate__", "n": len(reports), **mean_report(reports).to_dict()}, sort_keys=True))


def cmd_synth_gen(args):
    space = load_space(args.space)
    senv = generate_synthetic(space, args.seed, n_pairwise=args.pairwise, noise_sigma=args.noise,
                              name=args.name)
    save_synthetic(senv, args.out)
    print(args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ragsearch", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one budgeted search")
    _add_env_args(p)
    _add_run_args(p)
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--params", help="controller hyperparameters as JSON")
    p.add_argument("--dump-traces", help="directory for per-question pipeline traces")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="env x algorithm x seed matrix from a manifest")
    p.add_argument("manifest")
    _add_run_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="ablation study from a spec file")
    _add_env_args(p)
    _add_run_args(p)
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stability", help="proxy-size stability")
    _add_env_args(p)
    _add_run_args(p)
    p.add_argument("--sizes", default="20,50,100,200")
    p.add_argument("--algos", default="random")
    p.add_argument("--seeds", default="11,22,33")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("report", help="tables and plot data from run directories")
    p.add_argument("--runs", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--interaction", "--table2", dest="what", action="store_const", const="interaction")
    g.add_argument("--preferences", "--fig2", dest="what", action="store_const", const="preferences")
    g.add_argument("--trajectories", "--fig3", dest="what", action="store_const", const="trajectories")
    g.add_argument("--baseline", "--table13", dest="what", action="store_const", const="baseline")
    p.add_argument("--emit", help="also write CSV plot data to this directory")
    p.add_argument("--render", action="store_true", help="render PNGs (needs matplotlib)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("score", help="score predictions against references")
    p.add_argument("--pred", required=True, help="JSONL with id, prediction")
    p.add_argument("--ref", required=True, help="JSONL with id, answers")
    p.add_argument("--weights", default="default")
    p.add_argument("--raw-tokens", action="store_true", help="skip answer normalization")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth-gen", help="write a random synthetic environment")
    p.add_argument("--space", default="default-text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairwise", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
