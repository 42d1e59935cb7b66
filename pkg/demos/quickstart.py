"""Search the default text-pipeline space on the bundled 12-question demo set.

Runs offline against the deterministic mock gateway, so every number printed
here is reproducible. Swap in ``gateway_from_config("gateway.json")`` to point
the same loop at a real chat / embedding endpoint.
"""
from pathlib import Path

from ragsearch import EvalCache, default_text_space, load_environment, mock_gateway, run_search

DATA = Path(__file__).parent / "data"

env = load_environment(DATA / "qa.jsonl", DATA / "corpus.jsonl", name="demo")
space = default_text_space()
print(f"{len(env.qa)} questions, {len(env.corpus)} documents, {space.cardinality():,} configurations")

gateway = mock_gateway()
cache = EvalCache()

for algo, seed in (("random", 11), ("tpe", 22), ("greedy", 33)):
    rec = run_search(env, space, algo, seed=seed, budget=30, gateway=gateway, cache=cache)
    best = rec.best_trial
    hits = sum(t.cache_hit for t in rec.trials)
    print(f"\n{algo:>7}: best {best.reward:.4f} at trial {best.index} ({hits} cache hits)")
    print("  best-so-far:", " ".join(f"{b:.2f}" for b in rec.best_so_far[::5]))
    for dim, label in best.config.labels.items():
        print(f"    {dim:<20} {label}")

# per-metric breakdown of the last run's winner
print("\nper-metric:", {k: round(v, 4) for k, v in best.per_metric.to_dict().items() if v is not None})
