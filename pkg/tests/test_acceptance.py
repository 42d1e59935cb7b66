"""Acceptance criteria, one PASS/FAIL line per criterion at the pinned tolerances."""
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ragsearch.engine import EvalCache, Limits, make_cache_key, run_search
from ragsearch.environment import CorpusDoc, generate_synthetic, make_environment, synthetic_reward
from ragsearch.gateway import mock_gateway
from ragsearch.metrics import (MetricWeights, lcs_length, meteor, modified_precisions, rouge_l, token_f1)
from ragsearch.reporting import aggregate, random_baseline_delta_from_scores, wins_and_ranks
from ragsearch.space import default_text_space

from conftest import build_five_item_env, tiny_space
from oracles import enumerate_optimum, lcs_table, multiset_f1, ngram_counts_bruteforce, rouge_l_oracle
from test_engine import BrokenEmbedder, small_text_space

HERE = Path(__file__).parent
FIXTURE = json.loads((HERE / "data" / "benchmark_seed_scores.json").read_text())
FP_SLACK = 1e-12  # float noise on top of display-rounding tolerances


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok
    return emit


def test_criterion_1_metric_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    vocab = list("abcdefghij")
    bad = []
    for i in range(1000):
        p = [str(x) for x in rng.choice(vocab, size=rng.integers(0, 13))]
        r = [str(x) for x in rng.choice(vocab, size=rng.integers(0, 13))]
        if lcs_length(p, r) != lcs_table(p, r) or rouge_l(" ".join(p), " ".join(r)) != rouge_l_oracle(p, r):
            bad.append(("rouge", i))
        if modified_precisions(p, r, 4) != [ngram_counts_bruteforce(p, r, n) for n in range(1, 5)]:
            bad.append(("bleu", i))
        if token_f1(" ".join(p), " ".join(r)) != multiset_f1(p, r):
            bad.append(("f1", i))
    pr, rr = 2 / 3, 1 / 2
    fmean = 10 * pr * rr / (rr + 9 * pr)
    meteor_cases = [("new york", "new york", 0.9375), ("paris", "paris", 0.5), ("a b", "c d", 0.0),
                    ("a x b", "a y z b", fmean * (1 - 0.5 * 1.0 ** 3))]
    for p, r, want in meteor_cases:
        if abs(meteor(p, r) - want) > 1e-9:
            bad.append(("meteor", p))
    dt = time.perf_counter() - t0
    ok = verdict("criterion 1 (metric oracles)", not bad and dt < 10,
                 f"{len(bad)} mismatches over 1000 pairs + {len(meteor_cases)} METEOR values, {dt:.2f}s")
    assert ok, bad[:5]


def _fixture_table():
    scores = {(e, a): v for e, row in FIXTURE["seed_scores"].items() for a, v in row.items()}
    return aggregate(scores), list(FIXTURE["expected_table"])


def test_criterion_2_reporting_fixture(verdict):
    t0 = time.perf_counter()
    table, algs = _fixture_table()
    envs = FIXTURE["envs"]
    cell_misses = []
    for a in algs:
        for e, (m, s) in zip(envs, FIXTURE["expected_table"][a]["cells"]):
            c = table[(e, a)]
            if abs(c.mean - m) > 0.0005 + FP_SLACK or abs(c.std - s) > 0.0005 + FP_SLACK:
                cell_misses.append(f"{a}/{e}: {c.mean:.6f}±{c.std:.6f} vs {m}±{s}")
    wr = wins_and_ranks(table, envs, algs)
    win_misses = [a for a in algs if wr[a][0] != FIXTURE["expected_table"][a]["wins"]]
    rb = FIXTURE["random_baseline"]
    deltas = random_baseline_delta_from_scores({a: r["score"] for a, r in rb["rows"].items()}, rb["baseline"])
    delta_misses = [a for a, r in rb["rows"].items() if abs(deltas[a] - r["delta"]) > 1e-4 + FP_SLACK]
    dt = time.perf_counter() - t0
    n_cells = len(algs) * len(envs)
    ok = verdict("criterion 2 (reporting fixture)",
                 not cell_misses and not win_misses and not delta_misses and dt < 1,
                 f"cells {n_cells - len(cell_misses)}/{n_cells} within 0.0005; wins {len(algs) - len(win_misses)}/"
                 f"{len(algs)} exact; deltas {len(rb['rows']) - len(delta_misses)}/{len(rb['rows'])} within 0.0001;"
                 f" {dt:.3f}s; misses: {cell_misses + win_misses + delta_misses}")
    assert ok


def test_criterion_2_rank_column(verdict):
    # Rank column check at +-0.05, as set out for the averaging rule
    table, algs = _fixture_table()
    wr = wins_and_ranks(table, FIXTURE["envs"], algs)
    misses = [f"{a}: {wr[a][1]:.3f} vs {FIXTURE['expected_table'][a]['rank']}" for a in algs
              if abs(wr[a][1] - FIXTURE["expected_table"][a]["rank"]) > 0.05 + FP_SLACK]
    ok = verdict("criterion 2 (rank column, +-0.05)", not misses,
                 f"{len(algs) - len(misses)}/{len(algs)} ranks match; misses: {misses}")
    assert ok


def test_criterion_3_mock_end_to_end(verdict):
    t0 = time.perf_counter()
    env = build_five_item_env()
    sp = default_text_space()
    off = sp.config(rewriter_prompt="off", chunk_size="256", chunk_overlap="0", retriever_embedder="emb-a",
                    retriever_top_k="1", bm25_weight_alpha="1.0", reranker_model="off", reranker_top_k="1",
                    pruner_prompt="off")
    from ragsearch.engine import evaluate_config
    reward = evaluate_config(off, env, mock_gateway()).reward
    logs = []
    for workers in (1, 1, 4, 8):
        rec = run_search(build_five_item_env(), sp, "tpe", 11, 12, mock_gateway(), limits=Limits(workers=workers))
        logs.append(rec.to_json(include_timing=False))
    identical = len(set(logs)) == 1
    dt = time.perf_counter() - t0
    ok = verdict("criterion 3 (mock end-to-end)", reward > 0.9 and identical,
                 f"off-config reward {reward:.5f} (> 0.9); logs byte-identical over repeats and workers 1/4/8:"
                 f" {identical}; {dt:.2f}s")
    assert ok


def test_criterion_4_controller_convergence(verdict):
    t0 = time.perf_counter()
    from ragsearch.controllers import ALGORITHMS
    sp = tiny_space((4, 3, 5, 2, 3, 2))  # 720 configs
    senv = generate_synthetic(sp, 21)
    opt_labels, _ = enumerate_optimum(sp, lambda lab: synthetic_reward(senv, sp.from_labels(lab)))
    one_cycle = 1 + sum(n - 1 for n in sp.sizes)
    neighbour_budget = 2 * one_cycle * len(sp)
    reached = {}
    for alg, budget in (("coordinate", one_cycle), ("greedy", neighbour_budget)):
        reached[alg] = all(run_search(senv, sp, alg, s, budget).best_trial.config.labels == opt_labels
                           for s in (11, 22, 33))
    uniform_mean = float(np.mean([synthetic_reward(senv, c) for c in sp.enumerate()]))
    beats = {a: sum(run_search(senv, sp, a, s, 30).best_reward > uniform_mean for s in (11, 22, 33))
             for a in ALGORITHMS if a != "random"}
    weak = [a for a, n in beats.items() if n < 2]
    dt = time.perf_counter() - t0
    ok = verdict("criterion 4 (controller convergence)", all(reached.values()) and not weak and dt < 60,
                 f"optimum reached {reached} (coordinate budget {one_cycle}, greedy {neighbour_budget});"
                 f" {len(beats) - len(weak)}/{len(beats)} adaptive controllers beat uniform mean"
                 f" {uniform_mean:.4f} in >= 2/3 seeds; {dt:.2f}s")
    assert ok, weak


def test_criterion_5_engine_semantics(verdict):
    env = build_five_item_env()
    sp = small_text_space()
    rec = run_search(env, sp, "random", 11, 30, mock_gateway())
    thirty = len(rec.trials) == 30

    gw = mock_gateway()
    gw.embedders["emb-b"] = BrokenEmbedder()
    faulty = run_search(env, sp, "random", 3, 30, gw)
    failed = [t for t in faulty.trials if t.failed]
    injected = len(faulty.trials) == 30 and bool(failed) and all(t.reward == 0.0 for t in failed)

    cache = EvalCache()
    first = run_search(env, sp, "random", 5, 10, mock_gateway(), cache)
    second = run_search(env, sp, "random", 5, 10, mock_gateway(), cache)
    cached = all(t.cache_hit for t in second.trials) and second.rewards == first.rewards

    cfg = rec.trials[0].config
    key = make_cache_key(cfg, env).digest()
    docs = list(env.corpus)
    docs[-1] = CorpusDoc(docs[-1].id, docs[-1].text[:-1] + "!")
    byte_changed = make_cache_key(cfg, make_environment(env.name, env.qa, docs)).digest() != key
    weights_changed = make_cache_key(cfg, env, MetricWeights.parse("rouge_l=0.5,token_f1=0.5")).digest() != key

    ok = verdict("criterion 5 (engine semantics)", thirty and injected and cached and byte_changed and weights_changed,
                 f"30 trials: {thirty}; {len(failed)} injected failures scored 0 without abort: {injected};"
                 f" cache hits identical: {cached}; corpus byte / weights change new key: {byte_changed}/{weights_changed}")
    assert ok


INVARIANT_SUITES = ["test_space.py", "test_environment.py", "test_gateway.py", "test_metrics.py",
                    "test_pipeline.py", "test_controllers.py", "test_engine.py", "test_reporting.py"]


def test_criterion_6_invariant_suite(verdict):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(HERE / f) for f in INVARIANT_SUITES]],
                          capture_output=True, text=True, cwd=HERE.parent)
    dt = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = verdict("criterion 6 (invariant suite)", proc.returncode == 0 and dt < 120, f"{summary}; {dt:.1f}s")
    assert ok, proc.stdout[-3000:]
