"""One configuration, one question: rewrite, chunk, retrieve, rerank, prune, generate.

Stage failures degrade instead of aborting (identity rewrite, lexical-only
retrieval, unreranked order, unpruned context, empty answer) and are noted
in the trace. Only unexpected internal errors mark the trace fatal.
"""
from __future__ import annotations

import math
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .environment import CorpusDoc, Environment, QAItem
from .gateway import ChatError, EmbedError, RerankError, compose_user_content, get_prompt
from .metrics import token_f1
from .space import OFF, PipelineConfig
from .text import metric_tokens, tokenize

BM25_K1 = 1.2
BM25_B = 0.75

PIPELINE_DEFAULTS = {
    "rewriter_prompt": OFF,
    "chunk_size": "256",
    "chunk_overlap": "0",
    "retriever_embedder": "emb-a",
    "retriever_top_k": "5",
    "bm25_weight_alpha": "0.5",
    "reranker_model": OFF,
    "reranker_top_k": "5",
    "pruner_prompt": OFF,
}
BUILTIN_RERANKERS = ("rr-a", "rr-b")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


def _order(scored: Sequence[ScoredChunk]) -> list[ScoredChunk]:
    return sorted(scored, key=lambda s: (-s.score, s.chunk.doc_id, s.chunk.index))


# -- chunking ---------------------------------------------------------------

def chunk_spans(n_tokens: int, size: int, overlap: int) -> list[tuple[int, int]]:
    """Token spans of width ``size`` at stride ``size - overlap``.

    A span fully contained in its predecessor (the short tail) is dropped.
    """
    if size < 1:
        raise ValueError("chunk size must be >= 1")
    if not 0 <= overlap < size:
        raise ValueError(f"overlap {overlap} must satisfy 0 <= overlap < size {size}")
    stride = size - overlap
    spans = []
    start = 0
    while start < n_tokens:
        end = min(start + size, n_tokens)
        if spans and end <= spans[-1][1]:
            break
        spans.append((start, end))
        start += stride
    return spans


def chunk_document(doc: CorpusDoc, size: int, overlap: int) -> list[Chunk]:
    """Split on whitespace and emit overlapping windows; chunk text keeps the original casing."""
    words = doc.text.split()
    return [Chunk(doc.id, i, " ".join(words[s:e]), (s, e))
            for i, (s, e) in enumerate(chunk_spans(len(words), size, overlap))]


# -- BM25 -------------------------------------------------------------------

@dataclass
class CorpusStats:
    """Document frequencies and lengths over a tokenized chunk collection."""

    n_docs: int
    df: Counter
    avgdl: float

    @classmethod
    def build(cls, token_lists: Sequence[Sequence[str]]) -> "CorpusStats":
        df = Counter()
        for toks in token_lists:
            df.update(set(toks))
        n = len(token_lists)
        avgdl = sum(len(t) for t in token_lists) / n if n else 0.0
        return cls(n, df, avgdl)

    def idf(self, term) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def bm25_score(query_tokens: Sequence[str], chunk_tokens: Sequence[str], stats: CorpusStats,
               k1=BM25_K1, b=BM25_B) -> float:
    """Okapi BM25 of one tokenized chunk; duplicate query tokens count once each occurrence."""
    if isinstance(chunk_tokens, Chunk):
        chunk_tokens = tokenize(chunk_tokens.text)
    tf = Counter(chunk_tokens)
    dl = len(chunk_tokens)
    norm = k1 * (1 - b + b * dl / stats.avgdl) if stats.avgdl > 0 else k1
    score = 0.0
    for t in query_tokens:
        f = tf.get(t, 0)
        if f:
            score += stats.idf(t) * f * (k1 + 1) / (f + norm)
    return score


class BM25Index:
    """Inverted-index BM25 scorer over a fixed chunk collection."""

    def __init__(self, token_lists: Sequence[Sequence[str]], k1=BM25_K1, b=BM25_B):
        self.stats = CorpusStats.build(token_lists)
        self.k1, self.b = k1, b
        self.lengths = np.array([len(t) for t in token_lists], dtype=float)
        avgdl = self.stats.avgdl or 1.0
        self._norm = k1 * (1 - b + b * self.lengths / avgdl)
        postings: dict[str, tuple[list, list]] = {}
        for i, toks in enumerate(token_lists):
            for term, f in Counter(toks).items():
                ids, tfs = postings.setdefault(term, ([], []))
                ids.append(i)
                tfs.append(f)
        self.postings = {t: (np.array(ids), np.array(tfs, dtype=float)) for t, (ids, tfs) in postings.items()}

    def scores(self, query_tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros(len(self.lengths))
        for t in query_tokens:
            if t not in self.postings:
                continue
            ids, tf = self.postings[t]
            out[ids] += self.stats.idf(t) * tf * (self.k1 + 1) / (tf + self._norm[ids])
        return out


# -- index cache ------------------------------------------------------------

class ChunkIndex:
    """Chunks of a corpus at one (size, overlap), with BM25 and lazily built embeddings."""

    def __init__(self, chunks: Sequence[Chunk]):
        self.chunks = list(chunks)
        self.tokens = [tokenize(c.text) for c in self.chunks]
        self.bm25 = BM25Index(self.tokens)
        doc_ids = sorted({c.doc_id for c in self.chunks})
        doc_rank = {d: i for i, d in enumerate(doc_ids)}
        self._doc_rank = np.array([doc_rank[c.doc_id] for c in self.chunks], dtype=np.int64)
        self._chunk_pos = np.array([c.index for c in self.chunks], dtype=np.int64)
        self._emb: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_corpus(cls, corpus: Sequence[CorpusDoc], size: int, overlap: int) -> "ChunkIndex":
        chunks = []
        for doc in corpus:
            chunks.extend(chunk_document(doc, size, overlap))
        return cls(chunks)

    def __len__(self):
        return len(self.chunks)

    def embeddings(self, provider) -> np.ndarray:
        key = getattr(provider, "provider_id", repr(provider))
        with self._lock:
            cached = self._emb.get(key)
        if cached is not None:
            return cached
        mat = np.asarray(provider.embed([c.text for c in self.chunks]), dtype=float)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        mat = mat / np.where(norms == 0, 1.0, norms)
        with self._lock:
            self._emb[key] = mat
        return mat

    def top_k(self, scores: np.ndarray, k: int) -> list[ScoredChunk]:
        order = np.lexsort((self._chunk_pos, self._doc_rank, -scores))[:k]
        return [ScoredChunk(self.chunks[i], float(scores[i])) for i in order]


class IndexCache:
    """Chunk indexes keyed by (corpus hash, chunk size, overlap); safe for concurrent readers.

    Concurrent misses on one key may build twice; both builds are identical.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._store: dict[tuple, ChunkIndex] = {}

    def get(self, env: Environment, size: int, overlap: int) -> ChunkIndex:
        key = (env.corpus_file_hash, size, overlap)
        with self._lock:
            idx = self._store.get(key)
        if idx is None:
            idx = ChunkIndex.from_corpus(env.corpus, size, overlap)
            with self._lock:
                self._store[key] = idx
        return idx

    def __len__(self):
        return len(self._store)


# -- stages -----------------------------------------------------------------

def rewrite(config: PipelineConfig | str, question: str, gateway, failures: list | None = None) -> str:
    """Query rewriting; ``config`` may be a config or the prompt id itself."""
    prompt_id = _param(config, "rewriter_prompt") if isinstance(config, PipelineConfig) else config
    if prompt_id == OFF:
        return question
    try:
        out = gateway.chat("rewriter", get_prompt("rewriter", prompt_id).text, question)
    except ChatError as exc:
        _note(failures, f"rewrite: {exc}")
        return question
    return out.strip()


def hybrid_retrieve(query: str, chunks, alpha: float, k: int, gateway, embedder: str = "emb-a",
                    failures: list | None = None) -> list[ScoredChunk]:
    """Top-``k`` chunks by ``alpha * bm25_norm + (1 - alpha) * (cos + 1) / 2``.

    BM25 is min-max normalized per query (all 0.5 when constant).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    index = chunks if isinstance(chunks, ChunkIndex) else ChunkIndex(chunks)
    if len(index) == 0:
        return []
    raw = index.bm25.scores(tokenize(query))
    lo, hi = raw.min(), raw.max()
    lexical = (raw - lo) / (hi - lo) if hi > lo else np.full_like(raw, 0.5)
    if alpha < 1.0:
        try:
            provider = gateway.embedder(embedder)
            mat = index.embeddings(provider)
            q = np.asarray(provider.embed([query]), dtype=float)[0]
            qn = np.linalg.norm(q)
            q = q / qn if qn > 0 else q
            dense = (np.clip(mat @ q, -1.0, 1.0) + 1.0) / 2.0
            scores = alpha * lexical + (1.0 - alpha) * dense
        except EmbedError as exc:
            _note(failures, f"retrieve: embedding failed, lexical only: {exc}")
            scores = lexical
    else:
        scores = lexical
    return index.top_k(scores, k)


def _builtin_rerank_score(label, query, text) -> float:
    if label == "rr-a":
        return token_f1(query, text)
    if label == "rr-b":
        q = set(metric_tokens(query))
        if not q:
            return 0.0
        return len(q & set(metric_tokens(text))) / len(q)
    raise RerankError(f"no built-in reranker {label!r}")


def rerank(query: str, candidates: Sequence[ScoredChunk], model: str, k: int, gateway=None,
           failures: list | None = None) -> list[ScoredChunk]:
    """Rescore candidates with the selected scorer and keep the top ``k``.

    ``off`` (or a scorer failure) keeps the incoming order. ``rr-a`` scores
    by token-F1 with the query, ``rr-b`` by query-token recall; an HTTP
    scorer on the gateway takes precedence when configured.
    """
    if model == OFF:
        return list(candidates[:k])
    try:
        if gateway is not None and getattr(gateway, "reranker", None) is not None:
            scores = gateway.reranker.score(model, query, [c.chunk.text for c in candidates])
        else:
            scores = [_builtin_rerank_score(model, query, c.chunk.text) for c in candidates]
    except RerankError as exc:
        _note(failures, f"rerank: {exc}")
        return list(candidates[:k])
    return _order([ScoredChunk(c.chunk, float(s)) for c, s in zip(candidates, scores)])[:k]


def join_context(chunks: Sequence[ScoredChunk]) -> str:
    return "\n\n".join(c.chunk.text for c in chunks)


def prune(query: str, reranked: Sequence[ScoredChunk], prompt_id: str, gateway,
          failures: list | None = None) -> str:
    context = join_context(reranked)
    if prompt_id == OFF or not reranked:
        return context
    try:
        out = gateway.chat("pruner", get_prompt("pruner", prompt_id).text,
                           compose_user_content(query, context))
    except ChatError as exc:
        _note(failures, f"prune: {exc}")
        return context
    return out.strip()


def generate(question: str, context: str, gateway, failures: list | None = None) -> str:
    try:
        out = gateway.chat("generator", get_prompt("generator", "fixed").text,
                           compose_user_content(question, context))
    except ChatError as exc:
        _note(failures, f"generate: {exc}")
        return ""
    return out.strip()


# -- end to end -------------------------------------------------------------

@dataclass
class PipelineTrace:
    original_query: str
    rewritten_query: str = ""
    retrieved: list[ScoredChunk] = field(default_factory=list)
    reranked: list[ScoredChunk] = field(default_factory=list)
    pruned_context: str = ""
    answer: str = ""
    stage_timings: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    fatal: bool = False
    qa_id: str | None = None

    def to_dict(self, include_timings=True) -> dict:
        def chunks(lst):
            return [{"doc_id": s.chunk.doc_id, "index": s.chunk.index, "span": list(s.chunk.token_span),
                     "score": s.score, "text": s.chunk.text} for s in lst]
        out = {
            "qa_id": self.qa_id,
            "original_query": self.original_query,
            "rewritten_query": self.rewritten_query,
            "retrieved": chunks(self.retrieved),
            "reranked": chunks(self.reranked),
            "pruned_context": self.pruned_context,
            "answer": self.answer,
            "failures": list(self.failures),
            "fatal": self.fatal,
        }
        if include_timings:
            out["stage_timings"] = dict(self.stage_timings)
        return out


def _note(failures, msg):
    if failures is not None:
        failures.append(msg)


def _param(config: PipelineConfig, name):
    return config[name] if name in config.space else PIPELINE_DEFAULTS[name]


def run_pipeline(config: PipelineConfig, question: QAItem | str, env: Environment, gateway,
                 index_cache: IndexCache | None = None) -> PipelineTrace:
    """Execute every stage for one question. Dimensions absent from the space take defaults."""
    qa_id = question.id if isinstance(question, QAItem) else None
    text = question.question if isinstance(question, QAItem) else question
    trace = PipelineTrace(original_query=text, qa_id=qa_id)
    cache = index_cache if index_cache is not None else IndexCache()
    clock = time.perf_counter
    try:
        t = clock()
        trace.rewritten_query = rewrite(_param(config, "rewriter_prompt"), text, gateway, trace.failures)
        trace.stage_timings["rewrite"] = clock() - t

        t = clock()
        index = cache.get(env, int(_param(config, "chunk_size")), int(_param(config, "chunk_overlap")))
        trace.stage_timings["chunk"] = clock() - t

        t = clock()
        trace.retrieved = hybrid_retrieve(
            trace.rewritten_query, index, float(_param(config, "bm25_weight_alpha")),
            int(_param(config, "retriever_top_k")), gateway, _param(config, "retriever_embedder"),
            trace.failures)
        trace.stage_timings["retrieve"] = clock() - t

        t = clock()
        trace.reranked = rerank(trace.rewritten_query, trace.retrieved, _param(config, "reranker_model"),
                                int(_param(config, "reranker_top_k")), gateway, trace.failures)
        trace.stage_timings["rerank"] = clock() - t

        t = clock()
        trace.pruned_context = prune(trace.rewritten_query, trace.reranked, _param(config, "pruner_prompt"),
                                     gateway, trace.failures)
        trace.stage_timings["prune"] = clock() - t

        t = clock()
        trace.answer = generate(text, trace.pruned_context, gateway, trace.failures)
        trace.stage_timings["generate"] = clock() - t
    except Exception as exc:  # unrecoverable: the engine turns this into a zero-reward trial
        trace.fatal = True
        trace.failures.append(f"fatal: {type(exc).__name__}: {exc}")
    return trace
