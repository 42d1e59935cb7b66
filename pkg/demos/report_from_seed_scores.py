"""Rebuild the published interaction table from per-seed best scores.

Reads the three-seed results for 13 optimizers on 7 environments
(tests/data/benchmark_seed_scores.json), aggregates them with population
std, and recomputes wins and average within-column ranks. Cells whose
printed value disagrees with the recomputation are listed at the end.
"""
import json
import sys
from pathlib import Path

from ragsearch.controllers import DISPLAY_NAMES
from ragsearch.reporting import aggregate, interaction_csv, random_baseline_delta_from_scores, wins_and_ranks

data = json.loads((Path(__file__).parents[1] / "tests" / "data" / "benchmark_seed_scores.json").read_text())
envs = data["envs"]
algs = list(data["expected_table"])

table = aggregate({(e, a): v for e, row in data["seed_scores"].items() for a, v in row.items()})
sys.stdout.write(interaction_csv(table, envs, algs))

# where the recomputation and the printed table part ways
wr = wins_and_ranks(table, envs, algs)
print("\ndisagreements with the printed table (display tolerance 0.0005):")
for a in algs:
    exp = data["expected_table"][a]
    for e, (m, s) in zip(envs, exp["cells"]):
        c = table[(e, a)]
        if abs(c.mean - m) > 0.0005 + 1e-12 or abs(c.std - s) > 0.0005 + 1e-12:
            print(f"  {DISPLAY_NAMES[a]:<12} {e:<7} computed {c.mean:.4f}±{c.std:.4f}, printed {m}±{s}")
    if abs(wr[a][1] - exp["rank"]) > 0.05 + 1e-12:
        print(f"  {DISPLAY_NAMES[a]:<12} rank    computed {wr[a][1]:.3f}, printed {exp['rank']}")

# gains over the random-trial mean
rb = data["random_baseline"]
deltas = random_baseline_delta_from_scores({a: r["score"] for a, r in rb["rows"].items()}, rb["baseline"])
print(f"\ngain over random-trial mean {rb['baseline']}:")
for a in sorted(deltas, key=lambda k: -deltas[k]):
    print(f"  {DISPLAY_NAMES[a]:<12} {deltas[a]:+.4f}  (printed {rb['rows'][a]['delta']:+.4f})")
