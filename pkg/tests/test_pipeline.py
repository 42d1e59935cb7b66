import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ragsearch.environment import CorpusDoc, QAItem, make_environment
from ragsearch.gateway import TIMEOUT, TRANSPORT, EmbedError, FaultInjectingChat, MockChat, mock_gateway
from ragsearch.metrics import token_f1
from ragsearch.pipeline import (BM25Index, Chunk, ChunkIndex, CorpusStats, IndexCache, ScoredChunk, bm25_score,
                                chunk_document, chunk_spans, generate, hybrid_retrieve, prune, rerank, rewrite,
                                run_pipeline)
from ragsearch.space import default_text_space
from ragsearch.text import tokenize

from oracles import bm25_straight


def test_chunk_examples():
    assert chunk_spans(10, 4, 0) == [(0, 4), (4, 8), (8, 10)]
    assert chunk_spans(10, 4, 2) == [(0, 4), (2, 6), (4, 8), (6, 10)]
    doc = CorpusDoc("d", "one two three")
    chunks = chunk_document(doc, 256, 0)
    assert len(chunks) == 1 and chunks[0].text == "one two three" and chunks[0].token_span == (0, 3)
    with pytest.raises(ValueError):
        chunk_spans(10, 4, 4)


@given(st.integers(0, 200), st.integers(1, 40), st.integers(0, 39))
@settings(max_examples=300, deadline=None)
def test_chunk_spans_cover_document(n, size, overlap):
    overlap = overlap % size
    spans = chunk_spans(n, size, overlap)
    covered = set()
    for i, (s, e) in enumerate(spans):
        assert e - s <= size and e <= n
        assert s == i * (size - overlap)
        covered.update(range(s, e))
        if i:
            assert e > spans[i - 1][1]  # never contained in the previous span
    assert covered == set(range(n))


def test_bm25_zero_and_hand_value():
    docs = [["apple", "pie", "recipe"], ["banana", "bread"]]
    stats = CorpusStats.build(docs)
    assert bm25_score(["cherry"], docs[0], stats) == 0.0
    assert bm25_score(["apple"], docs[0], stats) == pytest.approx(bm25_straight(["apple"], docs[0], docs))
    # hand evaluation: N=2, df=1 -> idf = ln(1 + 1.5/1.5) = ln 2; avgdl = 2.5; dl = 3
    norm = 1.2 * (1 - 0.75 + 0.75 * 3 / 2.5)
    assert bm25_score(["apple"], docs[0], stats) == pytest.approx(np.log(2) * 2.2 / (1 + norm))


def test_bm25_length_normalization():
    short = ["apple", "x"]
    padded = short + ["pad"] * 6
    other = ["banana"]
    s1 = bm25_score(["apple"], short, CorpusStats.build([short, other]))
    s2 = bm25_score(["apple"], padded, CorpusStats.build([padded, other]))
    assert s2 < s1


@given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10), min_size=1, max_size=6),
       st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=4))
@settings(max_examples=150, deadline=None)
def test_bm25_index_matches_straight_line(docs, query):
    got = BM25Index(docs).scores(query)
    expect = [bm25_straight(query, d, docs) for d in docs]
    np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-12)
    assert (got >= 0).all()


def make_chunks(texts):
    return [Chunk(f"d{i}", 0, t, (0, len(t.split()))) for i, t in enumerate(texts)]


TEXTS = ["apple banana cherry", "banana split dessert", "cherry tree garden", "garden hose water",
         "apple orchard harvest", "water cycle rain", "dessert menu apple"]


def ranking(scored):
    return [s.chunk.doc_id for s in scored]


def test_hybrid_alpha_boundaries():
    gw = mock_gateway()
    idx = ChunkIndex(make_chunks(TEXTS))
    q = "apple dessert"
    bm = idx.bm25.scores(tokenize(q))
    bm_rank = ranking(idx.top_k(bm, 7))
    assert ranking(hybrid_retrieve(q, idx, 1.0, 7, gw)) == bm_rank
    emb = gw.embedder("emb-a")
    cos = idx.embeddings(emb) @ emb.embed([q])[0]
    assert ranking(hybrid_retrieve(q, idx, 0.0, 7, gw)) == ranking(idx.top_k(cos, 7))
    assert len(hybrid_retrieve(q, idx, 0.5, 50, gw)) == 7
    scores = [s.score for s in hybrid_retrieve(q, idx, 0.3, 7, gw)]
    assert all(0 <= s <= 1 for s in scores) and scores == sorted(scores, reverse=True)


def test_hybrid_constant_bm25_is_half():
    idx = ChunkIndex(make_chunks(["a b", "c d"]))
    out = hybrid_retrieve("zzz", idx, 1.0, 2, mock_gateway())
    assert [s.score for s in out] == [0.5, 0.5]
    assert ranking(out) == ["d0", "d1"]  # ties by (doc_id, index)


def test_hybrid_embed_failure_falls_back():
    class Broken:
        provider_id = "broken"

        def embed(self, texts):
            raise EmbedError("down")
    gw = mock_gateway()
    gw.embedders["emb-a"] = Broken()
    failures = []
    idx = ChunkIndex(make_chunks(TEXTS))
    out = hybrid_retrieve("apple dessert", idx, 0.25, 7, gw, "emb-a", failures)
    assert ranking(out) == ranking(hybrid_retrieve("apple dessert", idx, 1.0, 7, gw)) and failures


def scored(texts):
    return [ScoredChunk(c, 1.0 - i * 0.1) for i, c in enumerate(make_chunks(texts))]


def test_rerank_rules():
    cands = scored(["a", "b", "c", "d", "e"])
    assert ranking(rerank("q", cands, "off", 3)) == ["d0", "d1", "d2"]
    cands = scored(["red fox", "quick brown fox jumps", "lazy dog"])
    assert ranking(rerank("quick brown fox jumps", cands, "rr-a", 3))[0] == "d1"
    assert len(rerank("x", scored(["a", "b", "c", "d"]), "rr-b", 10)) == 4


def test_rerank_failure_falls_back():
    failures = []
    cands = scored(["a", "b", "c"])
    assert ranking(rerank("q", cands, "rr-zzz", 2, failures=failures)) == ["d0", "d1"] and failures


@given(st.lists(st.sampled_from(["alpha beta", "beta gamma", "gamma", "delta alpha", "x"]), max_size=8),
       st.sampled_from(["off", "rr-a", "rr-b"]), st.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_rerank_sub_multiset(texts, model, k):
    cands = scored(texts)
    out = rerank("alpha gamma", cands, model, k)
    assert len(out) <= min(k, len(cands))
    assert {s.chunk for s in out} <= {s.chunk for s in cands}


def test_rewrite_rules():
    gw = mock_gateway()
    assert rewrite("off", "Who?", gw) == "Who?"
    assert rewrite("P2", "Who?", gw) == "Who?"
    failures = []
    bad = gw.with_chat(FaultInjectingChat(MockChat(), fault=lambda r: TRANSPORT))
    assert rewrite("P1", "Who?", bad, failures) == "Who?" and failures


def test_prune_rules():
    gw = mock_gateway()
    assert prune("q", scored(["A", "B"]), "off", gw) == "A\n\nB"
    ctx = scored(["Bananas are yellow.", "The capital of France is Paris."])
    out = prune("What is the capital of France?", ctx, "P1", gw)
    assert "Paris" in out and "Bananas" not in out
    counter = FaultInjectingChat(MockChat())
    assert prune("q", [], "P1", gw.with_chat(counter)) == "" and counter.calls == 0


def test_generate_rules():
    gw = mock_gateway()
    ctx = "Noise sentence here. The Ming dynasty rebuilt the wall."
    assert generate("Which dynasty rebuilt the wall?", ctx, gw) == "The Ming dynasty rebuilt the wall."
    failures = []
    assert generate("anything", "", gw, failures) == ""
    slow = gw.with_chat(FaultInjectingChat(MockChat(), latency=999))
    failures = []
    assert generate("q", ctx, slow, failures) == "" and any(TIMEOUT in f for f in failures)


def test_run_pipeline_all_off_composition(five_env, gateway):
    sp = default_text_space()
    cfg = sp.config(rewriter_prompt="off", chunk_size="256", chunk_overlap="0", retriever_embedder="emb-a",
                    retriever_top_k="3", bm25_weight_alpha="0.5", reranker_model="off", reranker_top_k="50",
                    pruner_prompt="off")
    q = five_env.qa[0]
    tr = run_pipeline(cfg, q, five_env, gateway)
    ctx = "\n\n".join(s.chunk.text for s in tr.retrieved)
    assert tr.pruned_context == ctx and tr.answer == generate(q.question, ctx, gateway)
    assert len(tr.reranked) <= min(50, len(tr.retrieved)) and len(tr.retrieved) <= 3
    assert set(tr.stage_timings) == {"rewrite", "chunk", "retrieve", "rerank", "prune", "generate"}


def test_run_pipeline_deterministic(five_env, gateway):
    sp = default_text_space()
    rng = np.random.default_rng(3)
    from ragsearch.space import sample_uniform
    for _ in range(10):
        cfg = sample_uniform(sp, rng)
        a = run_pipeline(cfg, five_env.qa[1], five_env, gateway).to_dict(include_timings=False)
        b = run_pipeline(cfg, five_env.qa[1], five_env, mock_gateway(), IndexCache()).to_dict(include_timings=False)
        assert a == b


def test_single_short_doc_corpus(gateway):
    env = make_environment("one", [QAItem("q", "what fruit?", ("apple",))], [CorpusDoc("d", "an apple a day")])
    sp = default_text_space()
    for k in ("1", "50"):
        cfg = sp.config(rewriter_prompt="off", chunk_size="256", chunk_overlap="64", retriever_embedder="emb-b",
                        retriever_top_k=k, bm25_weight_alpha="0.25", reranker_model="rr-a", reranker_top_k="5",
                        pruner_prompt="off")
        tr = run_pipeline(cfg, env.qa[0], env, gateway)
        assert [s.chunk.text for s in tr.retrieved] == ["an apple a day"]


def test_index_cache_reuse(five_env):
    cache = IndexCache()
    a = cache.get(five_env, 256, 0)
    assert cache.get(five_env, 256, 0) is a and len(cache) == 1
    cache.get(five_env, 512, 0)
    assert len(cache) == 2


def test_unrecoverable_error_sets_fatal(five_env):
    class Exploding:
        provider_id = "boom"

        def embed(self, texts):
            raise RuntimeError("segfault-ish")
    gw = mock_gateway()
    gw.embedders["emb-a"] = Exploding()
    sp = default_text_space()
    cfg = sp.config(rewriter_prompt="off", chunk_size="256", chunk_overlap="0", retriever_embedder="emb-a",
                    retriever_top_k="3", bm25_weight_alpha="0.5", reranker_model="off", reranker_top_k="3",
                    pruner_prompt="off")
    tr = run_pipeline(cfg, five_env.qa[0], five_env, gw)
    assert tr.fatal and "RuntimeError" in tr.failures[-1]


def test_reranker_self_match_uses_f1():
    q = "the quick brown fox"
    cands = scored(["quick fox", q, "brown"])
    best = rerank(q, cands, "rr-a", 1)[0]
    assert best.score == pytest.approx(token_f1(q, q)) == 1.0
