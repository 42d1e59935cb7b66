import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ragsearch.environment import (CorpusDoc, LoadError, QAItem, SyntheticEnvironment, generate_synthetic,
                                   load_environment, load_synthetic, make_environment, save_environment,
                                   save_synthetic, subsample, synthetic_optimum, synthetic_reward)
from ragsearch.space import Dimension, SearchSpace, canonical_key, default_text_space

from conftest import tiny_space
from oracles import enumerate_optimum


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def qa_rows(n):
    return [{"id": f"q{i}", "question": f"question {i}?", "answers": [f"answer {i}"]} for i in range(n)]


def test_load_hundred_rows_and_hash_stability(tmp_path):
    write_jsonl(tmp_path / "qa.jsonl", qa_rows(100))
    write_jsonl(tmp_path / "c.jsonl", [{"id": "d0", "text": "some text", "image_path": "x.png"}])
    a = load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")
    b = load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")
    assert len(a.qa) == 100
    assert [q.id for q in a.qa] == [f"q{i}" for i in range(100)]
    assert (a.qa_file_hash, a.corpus_file_hash) == (b.qa_file_hash, b.corpus_file_hash)
    assert a.corpus[0].image_path == "x.png"


def test_one_byte_change_changes_hash(tmp_path):
    write_jsonl(tmp_path / "qa.jsonl", qa_rows(3))
    write_jsonl(tmp_path / "c.jsonl", [{"id": "d0", "text": "some text"}])
    a = load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")
    write_jsonl(tmp_path / "c.jsonl", [{"id": "d0", "text": "some texT"}])
    b = load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")
    assert a.corpus_file_hash != b.corpus_file_hash and a.qa_file_hash == b.qa_file_hash


@pytest.mark.parametrize("bad, msg", [
    ({"id": "q9", "question": "q?"}, ":3:"),
    ({"id": "q9", "question": "q?", "answers": []}, ":3:"),
])
def test_bad_qa_record_names_line(tmp_path, bad, msg):
    rows = qa_rows(2) + [bad]
    write_jsonl(tmp_path / "qa.jsonl", rows)
    write_jsonl(tmp_path / "c.jsonl", [{"id": "d0", "text": "t"}])
    with pytest.raises(LoadError, match=msg):
        load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")


def test_duplicate_corpus_id(tmp_path):
    write_jsonl(tmp_path / "qa.jsonl", qa_rows(1))
    write_jsonl(tmp_path / "c.jsonl", [{"id": "d0", "text": "a"}, {"id": "d0", "text": "b"}])
    with pytest.raises(LoadError, match=":2:.*d0"):
        load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl")


def test_serialize_round_trip(tmp_path):
    env = make_environment("x", [QAItem("a", "who?", ("me", "I")), QAItem("b", "what?", ("it",))],
                           [CorpusDoc("d", "text here"), CorpusDoc("e", "more", "img.png")])
    save_environment(env, tmp_path / "qa.jsonl", tmp_path / "c.jsonl")
    back = load_environment(tmp_path / "qa.jsonl", tmp_path / "c.jsonl", name="x")
    assert back.qa == env.qa and back.corpus == env.corpus
    assert back.qa_file_hash == env.qa_file_hash


def make_pool(n):
    return make_environment("pool", [QAItem(f"q{i}", f"q{i}?", ("a",)) for i in range(n)],
                            [CorpusDoc("d", "text")])


def test_subsample_full_and_deterministic():
    env = make_pool(50)
    full = subsample(env, 50, 3)
    assert sorted(q.id for q in full.qa) == sorted(q.id for q in env.qa)
    assert subsample(env, 10, 42).qa == subsample(env, 10, 42).qa
    assert subsample(env, 10, 42).corpus == env.corpus
    with pytest.raises(ValueError):
        subsample(env, 0, 1)
    with pytest.raises(ValueError):
        subsample(env, 51, 1)


def test_subsample_small_not_always_prefix_of_large():
    env = make_pool(300)
    # independent shuffles per seed: some seed pair gives a size-20 set outside the size-200 set
    found = any(not {q.id for q in subsample(env, 20, s).qa} <= {q.id for q in subsample(env, 200, s + 1000).qa}
                for s in range(20))
    assert found


@given(st.integers(1, 40), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_subsample_is_sub_multiset(n, seed):
    env = make_pool(40)
    ids = [q.id for q in subsample(env, n, seed).qa]
    assert len(ids) == n == len(set(ids)) and set(ids) <= {q.id for q in env.qa}


def test_subsample_stored_order():
    env = make_pool(10)
    assert [q.id for q in subsample(env, 3, 0, shuffle=False).qa] == ["q0", "q1", "q2"]


def test_constant_landscape_is_half():
    senv = SyntheticEnvironment(tiny_space())
    for c in senv.space.enumerate():
        assert synthetic_reward(senv, c) == 0.5


def straight_line_value(senv, labels):
    total = sum(w for (d, v), w in senv.unary_weights.items() if labels[d] == v)
    total += sum(w for (da, va, db, vb), w in senv.pairwise_terms.items() if labels[da] == va and labels[db] == vb)
    return total


def test_noiseless_reward_matches_straight_line():
    sp = tiny_space((3, 4, 2, 3))
    senv = generate_synthetic(sp, seed=4, n_pairwise=5)
    vals = {canonical_key(c): straight_line_value(senv, c.labels) for c in sp.enumerate()}
    lo, hi = min(vals.values()), max(vals.values())
    for c in sp.enumerate():
        expect = (vals[canonical_key(c)] - lo) / (hi - lo)
        assert synthetic_reward(senv, c) == pytest.approx(expect, abs=1e-12)


def test_separable_optimum_is_per_dimension_argmax():
    sp = tiny_space((4, 3, 5, 2))
    senv = generate_synthetic(sp, seed=9)
    cfg, r = synthetic_optimum(senv)
    expect = {d.name: max(d.values, key=lambda v: senv.unary_weights[(d.name, v)]) for d in sp.dimensions}
    brute, _ = enumerate_optimum(sp, lambda lab: straight_line_value(senv, lab))
    assert cfg.labels == expect == brute
    assert r == pytest.approx(1.0)


def test_optimum_tie_break_smallest_key():
    sp = tiny_space((3, 2))
    senv = SyntheticEnvironment(sp, {("d0", "v1"): 1.0, ("d0", "v2"): 1.0})
    cfg, _ = synthetic_optimum(senv)
    assert cfg.labels == {"d0": "v1", "d1": "v0"}


def test_optimum_refuses_huge_space():
    big = SearchSpace([Dimension(f"x{i}", "retriever", tuple("abcdefghij")) for i in range(7)])
    with pytest.raises(ValueError, match="bound"):
        synthetic_optimum(SyntheticEnvironment(big, {("x0", "a"): 1.0}))


def test_noise_keyed_on_config():
    sp = tiny_space()
    senv = generate_synthetic(sp, seed=1, noise_sigma=0.2)
    c = next(iter(sp.enumerate()))
    assert synthetic_reward(senv, c) == synthetic_reward(senv, c)
    assert all(0 <= synthetic_reward(senv, x) <= 1 for x in sp.enumerate())


def test_synthetic_file_round_trip(tmp_path):
    senv = generate_synthetic(default_text_space(), seed=2, n_pairwise=3, noise_sigma=0.1, name="s")
    save_synthetic(senv, tmp_path / "s.json")
    back = load_synthetic(tmp_path / "s.json")
    assert back.digest() == senv.digest()
    c = default_text_space().config({n: 0 for n in default_text_space().names})
    assert synthetic_reward(back, c) == synthetic_reward(senv, c)


def test_synthetic_file_with_space_reference(tmp_path):
    data = {"space": "default-text", "unary_weights": [{"dim": "chunk_size", "value": "512", "weight": 1.0}],
            "pairwise_terms": [], "noise_sigma": 0, "noise_seed": 0}
    (tmp_path / "s.json").write_text(json.dumps(data))
    senv = load_synthetic(tmp_path / "s.json")
    cfg, _ = synthetic_optimum(senv)
    assert cfg["chunk_size"] == "512"


def test_synthetic_subsample_scales_noise():
    senv = generate_synthetic(tiny_space(), seed=0, noise_sigma=0.4)
    sub = subsample(senv, 16, 1)
    assert sub.noise_sigma == pytest.approx(0.1)
    assert sub.noise_seed != senv.noise_seed
    assert np.isfinite(synthetic_reward(sub, next(iter(sub.space.enumerate()))))
