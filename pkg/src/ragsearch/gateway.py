"""Model inference behind two provider contracts: chat completion and text embedding.

Two kinds of backend exist for each contract. The deterministic ones
(:class:`MockChat`, :class:`HashEmbedder`) need no model and drive the test
suite. The HTTP ones speak the OpenAI-compatible ``/chat/completions`` and
``/embeddings`` wire format.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import requests

from .metrics import token_f1
from .text import content_tokens, split_sentences, tokenize

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 256
DEFAULT_TIMEOUT = 60.0
HASH_DIM = 256

TIMEOUT, TRANSPORT, MALFORMED = "timeout", "transport", "malformed"
FAILURE_CAUSES = (TIMEOUT, TRANSPORT, MALFORMED)


class ChatError(RuntimeError):
    """A chat request failed; ``cause`` is one of timeout, transport, malformed."""

    def __init__(self, cause, message=""):
        if cause not in FAILURE_CAUSES:
            raise ValueError(f"unknown failure cause {cause!r}")
        super().__init__(f"{cause}: {message}" if message else cause)
        self.cause = cause


class EmbedError(RuntimeError):
    pass


class RerankError(RuntimeError):
    pass


class PromptError(KeyError):
    pass


# -- prompt registry --------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    module_tag: str
    id: str
    text: str


_REWRITE_TAIL = "Output only the rewritten query; do not answer the question or add explanations."
_PRUNE_TAIL = "Output only the pruned context text; do not answer the question or add explanations."

PROMPTS: dict[tuple[str, str], PromptTemplate] = {
    (t.module_tag, t.id): t
    for t in [
        PromptTemplate("rewriter", "P1", "Rewrite the user query for retrieval. " + _REWRITE_TAIL),
        PromptTemplate("rewriter", "P2",
                       "Rewrite the user query for retrieval with keywords and entities. " + _REWRITE_TAIL),
        PromptTemplate("rewriter", "P3",
                       "Rewrite the user query as a standalone question for retrieval. " + _REWRITE_TAIL),
        PromptTemplate("pruner", "P1",
                       "Keep only sentences that directly support the answer. " + _PRUNE_TAIL),
        PromptTemplate("pruner", "P2", "Select the minimal context needed to answer. " + _PRUNE_TAIL),
        PromptTemplate("pruner", "P3",
                       "Remove irrelevant content and keep key evidence only. " + _PRUNE_TAIL),
        PromptTemplate("generator", "fixed",
                       "Answer the question using only the provided context. "
                       "If the answer is not in the context, state that it is unknown."),
        PromptTemplate("judge", "fixed",
                       "Judge whether the answer matches the reference list "
                       "and return a JSON score with a short reason."),
    ]
}


def get_prompt(module_tag, prompt_id) -> PromptTemplate:
    try:
        return PROMPTS[(module_tag, prompt_id)]
    except KeyError:
        raise PromptError(f"no prompt template {prompt_id!r} for module {module_tag!r}") from None


# -- message layout ---------------------------------------------------------

_CONTEXT_MARK = "\n\nContext:\n"
_QUESTION_MARK = "Question: "


def compose_user_content(question, context=None):
    """User message for context-bearing roles (pruner, generator)."""
    if context is None:
        return question
    return f"{_QUESTION_MARK}{question}{_CONTEXT_MARK}{context}"


def parse_user_content(content):
    """Inverse of :func:`compose_user_content`: returns ``(question, context or None)``."""
    if content.startswith(_QUESTION_MARK) and _CONTEXT_MARK in content:
        q, _, ctx = content[len(_QUESTION_MARK):].partition(_CONTEXT_MARK)
        return q, ctx
    return content, None


def compose_judge_content(question, answer, references):
    return json.dumps({"question": question, "answer": answer, "references": list(references)},
                      ensure_ascii=False)


@dataclass(frozen=True)
class ChatRequest:
    role: str
    system_prompt: str
    user_content: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = DEFAULT_TIMEOUT


# -- chat backends ----------------------------------------------------------

def _best_overlap_sentence(question, context):
    q = content_tokens(question)
    best, best_n = "", -1
    for sent in split_sentences(context):
        n = len(q & set(tokenize(sent)))
        if n > best_n:
            best, best_n = sent, n
    return best


class MockChat:
    """Deterministic stand-in for a chat model.

    rewriter returns the query unchanged; pruner keeps the context sentences
    sharing at least one non-stopword question token; generator returns the
    context sentence with the most shared non-stopword question tokens
    (earliest on ties); judge emits ``{"score": 0|1, "reason": ...}`` with
    score 1 when token-F1 against any reference is at least 0.5.
    """

    provider_id = "mock"

    def complete(self, req: ChatRequest) -> str:
        if req.role == "rewriter":
            return req.user_content
        if req.role == "pruner":
            question, context = parse_user_content(req.user_content)
            q = content_tokens(question)
            kept = [s for s in split_sentences(context or "") if q & set(tokenize(s))]
            return " ".join(kept)
        if req.role == "generator":
            question, context = parse_user_content(req.user_content)
            return _best_overlap_sentence(question, context or "")
        if req.role == "judge":
            try:
                payload = json.loads(req.user_content)
            except json.JSONDecodeError:
                raise ChatError(MALFORMED, "judge payload is not JSON") from None
            best = max((token_f1(payload["answer"], r) for r in payload["references"]), default=0.0)
            score = int(best >= 0.5)
            return json.dumps({"score": score, "reason": f"token-F1 {best:.3f} vs threshold 0.5"})
        raise ChatError(MALFORMED, f"mock backend has no behavior for role {req.role!r}")


class FaultInjectingChat:
    """Wraps a backend and injects failures for matching requests.

    ``fault`` maps a request to a failure cause (or None for no fault).
    ``latency`` simulates response time; a latency above the request timeout
    is reported as a timeout without actually sleeping.
    """

    def __init__(self, inner, fault: Callable[[ChatRequest], str | None] | None = None,
                 latency: float = 0.0, fail_times: int | None = None):
        self.inner = inner
        self.fault = fault
        self.latency = latency
        self.fail_times = fail_times
        self.provider_id = f"faulty({getattr(inner, 'provider_id', 'chat')})"
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
            budget_left = self.fail_times is None or self.fail_times > 0
        if self.latency > req.timeout:
            raise ChatError(TIMEOUT, f"simulated latency {self.latency}s > {req.timeout}s")
        cause = self.fault(req) if self.fault else None
        if cause and budget_left:
            with self._lock:
                if self.fail_times is not None:
                    self.fail_times -= 1
            raise ChatError(cause, "injected fault")
        return self.inner.complete(req)


class HTTPChat:
    """OpenAI-compatible ``POST {base_url}/chat/completions`` client."""

    def __init__(self, base_url, model, api_key=None, max_in_flight=8, session=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.provider_id = f"http:{model}"
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()

    def payload(self, req: ChatRequest) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_content},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }

    def complete(self, req: ChatRequest) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        with self._slots:
            try:
                resp = self._session.post(f"{self.base_url}/chat/completions", json=self.payload(req),
                                          headers=headers, timeout=req.timeout)
                resp.raise_for_status()
                data = resp.json()
            except requests.Timeout as exc:
                raise ChatError(TIMEOUT, str(exc)) from exc
            except (requests.RequestException, ValueError) as exc:
                raise ChatError(TRANSPORT, str(exc)) from exc
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ChatError(MALFORMED, "response lacks choices[0].message.content") from None
        if not isinstance(content, str):
            raise ChatError(MALFORMED, "message content is not text")
        return content


def chat_complete(backend, req: ChatRequest) -> str:
    """Send one request; retry once on transport failure, never on timeout.

    Empty or whitespace-only responses are a ``malformed`` failure.
    """
    for attempt in (0, 1):
        try:
            text = backend.complete(req)
        except ChatError as exc:
            if exc.cause == TRANSPORT and attempt == 0:
                log.warning("transport failure, retrying once: %s", exc)
                continue
            raise
        if not text or not text.strip():
            raise ChatError(MALFORMED, "empty response")
        return text
    raise AssertionError("unreachable")


# -- embedding backends -----------------------------------------------------

class HashEmbedder:
    """Signed-hash bag-of-words embedding, L2-normalized.

    Each token is hashed (salted by ``salt``) to one of ``dim`` buckets with a
    hash-derived sign. Texts with no tokens map to the first basis vector.
    """

    def __init__(self, dim=HASH_DIM, salt=""):
        self.dim = dim
        self.salt = salt
        self.provider_id = f"hash{dim}:{salt}" if salt else f"hash{dim}"

    def _bucket(self, token):
        h = int.from_bytes(hashlib.blake2b(f"{self.salt}\x00{token}".encode(), digest_size=8).digest(),
                           "little")
        return h % self.dim, 1.0 if (h // self.dim) & 1 else -1.0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for tok in tokenize(text):
                i, s = self._bucket(tok)
                out[row, i] += s
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, 0] = 1.0
            else:
                out[row] /= norm
        return out


class HTTPEmbedder:
    """OpenAI-compatible ``POST {base_url}/embeddings`` client."""

    def __init__(self, base_url, model, api_key=None, timeout=DEFAULT_TIMEOUT, session=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.provider_id = f"http:{model}"
        self._session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.post(f"{self.base_url}/embeddings",
                                      json={"model": self.model, "input": list(texts)},
                                      headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
            vecs = np.array([d["embedding"] for d in data], dtype=float)
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise EmbedError(str(exc)) from exc
        if vecs.shape[0] != len(texts):
            raise EmbedError(f"expected {len(texts)} vectors, got {vecs.shape[0]}")
        return vecs


def embed(backend, texts: Sequence[str]) -> np.ndarray:
    """One row per text; raises :class:`EmbedError` on provider failure."""
    if not texts:
        raise ValueError("texts must be non-empty")
    return backend.embed(list(texts))


class HTTPReranker:
    """Cross-encoder scorer behind a ``POST {base_url}/rerank`` endpoint.

    Request ``{model, query, documents}``; response
    ``{results: [{index, relevance_score}]}``.
    """

    def __init__(self, base_url, models: Mapping[str, str], api_key=None, timeout=DEFAULT_TIMEOUT,
                 session=None):
        self.base_url = base_url.rstrip("/")
        self.models = dict(models)
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def score(self, label, query, documents: Sequence[str]) -> list[float]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        model = self.models.get(label, label)
        try:
            resp = self._session.post(f"{self.base_url}/rerank",
                                      json={"model": model, "query": query, "documents": list(documents)},
                                      headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            scores = [0.0] * len(documents)
            for r in resp.json()["results"]:
                scores[int(r["index"])] = float(r["relevance_score"])
        except (requests.RequestException, ValueError, KeyError, TypeError, IndexError) as exc:
            raise RerankError(str(exc)) from exc
        return scores


# -- gateway ----------------------------------------------------------------

@dataclass
class Gateway:
    """Bundles the chat backend, embedding providers and optional rerank scorer.

    ``embedders`` maps a retriever model label (e.g. ``emb-a``) to a provider;
    unknown labels fall back to ``default_embedder`` when one is given.
    """

    chat_backend: object
    embedders: dict = field(default_factory=dict)
    default_embedder: object | None = None
    reranker: HTTPReranker | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = DEFAULT_TIMEOUT

    def embedder(self, label):
        if label in self.embedders:
            return self.embedders[label]
        if self.default_embedder is not None:
            return self.default_embedder
        raise EmbedError(f"no embedding provider for {label!r}")

    def request(self, role, system_prompt, user_content) -> ChatRequest:
        return ChatRequest(role, system_prompt, user_content, self.temperature, self.max_tokens, self.timeout)

    def chat(self, role, system_prompt, user_content) -> str:
        return chat_complete(self.chat_backend, self.request(role, system_prompt, user_content))

    def judge(self, question, answer, references) -> str:
        return self.chat("judge", get_prompt("judge", "fixed").text,
                         compose_judge_content(question, answer, references))

    def with_chat(self, backend) -> "Gateway":
        return replace(self, chat_backend=backend)

    def describe(self) -> dict:
        return {
            "chat": getattr(self.chat_backend, "provider_id", type(self.chat_backend).__name__),
            "embed": {k: getattr(v, "provider_id", type(v).__name__) for k, v in sorted(self.embedders.items())},
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "timeout": self.timeout,
        }


def mock_gateway(labels=("emb-a", "emb-b"), dim=HASH_DIM) -> Gateway:
    """Fully deterministic gateway: mock chat and one salted hash embedder per label."""
    return Gateway(MockChat(), {lab: HashEmbedder(dim, salt=lab) for lab in labels},
                   default_embedder=HashEmbedder(dim))


def gateway_from_config(cfg: Mapping | str | Path | None) -> Gateway:
    """Build a gateway from a config mapping or JSON file.

    Layout::

        {"chat": {"kind": "mock" | "http", "base_url": ..., "model": ...,
                  "key_env": ..., "temperature": 0, "max_tokens": 256,
                  "timeout": 60, "max_in_flight": 8},
         "embed": {"kind": "hash" | "http", "dim": 256, "base_url": ...,
                   "models": {"emb-a": ..., "emb-b": ...}, "key_env": ...},
         "rerank": {"kind": "builtin" | "http", "base_url": ...,
                    "models": {"rr-a": ..., "rr-b": ...}}}
    """
    if cfg is None:
        return mock_gateway()
    if not isinstance(cfg, Mapping):
        with open(cfg) as fh:
            cfg = json.load(fh)
    chat_cfg = dict(cfg.get("chat", {"kind": "mock"}))
    embed_cfg = dict(cfg.get("embed", {"kind": "hash"}))
    rerank_cfg = dict(cfg.get("rerank", {"kind": "builtin"}))

    def key(section):
        env = section.get("key_env")
        return os.environ.get(env) if env else None

    kind = chat_cfg.get("kind", "mock")
    if kind == "mock":
        chat = MockChat()
    elif kind == "http":
        chat = HTTPChat(chat_cfg["base_url"], chat_cfg["model"], key(chat_cfg),
                        int(chat_cfg.get("max_in_flight", 8)))
    else:
        raise ValueError(f"unknown chat kind {kind!r}")

    kind = embed_cfg.get("kind", "hash")
    labels = ("emb-a", "emb-b")
    if kind == "hash":
        dim = int(embed_cfg.get("dim", HASH_DIM))
        embedders = {lab: HashEmbedder(dim, salt=lab) for lab in labels}
        default = HashEmbedder(dim)
    elif kind == "http":
        models = embed_cfg.get("models") or {lab: embed_cfg["model"] for lab in labels}
        embedders = {lab: HTTPEmbedder(embed_cfg["base_url"], m, key(embed_cfg)) for lab, m in models.items()}
        default = HTTPEmbedder(embed_cfg["base_url"], embed_cfg["model"], key(embed_cfg)) \
            if "model" in embed_cfg else None
    else:
        raise ValueError(f"unknown embed kind {kind!r}")

    reranker = None
    kind = rerank_cfg.get("kind", "builtin")
    if kind == "http":
        reranker = HTTPReranker(rerank_cfg["base_url"], rerank_cfg.get("models", {}), key(rerank_cfg))
    elif kind != "builtin":
        raise ValueError(f"unknown rerank kind {kind!r}")

    return Gateway(chat, embedders, default, reranker,
                   float(chat_cfg.get("temperature", DEFAULT_TEMPERATURE)),
                   int(chat_cfg.get("max_tokens", DEFAULT_MAX_TOKENS)),
                   float(chat_cfg.get("timeout", DEFAULT_TIMEOUT)))
