"""Answer-level evaluation: lexical metrics, embedding recall, judge parsing, weighted objective.

All lexical metrics operate on normalized tokens (lowercase, punctuation
removed, whitespace collapsed) unless ``raw=True``. Empty-input conventions
for token-F1 and ROUGE-L: both empty scores 1, exactly one empty scores 0.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .text import metric_tokens, normalize_answer

MAIN_METRICS = ("rouge_l", "meteor", "token_f1", "bleu")
ALL_METRICS = MAIN_METRICS + ("em", "bertscore_recall", "judge")

log = logging.getLogger(__name__)


def exact_match(pred, ref) -> int:
    return int(normalize_answer(pred) == normalize_answer(ref))


def _empty_rule(a, b):
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return None


def token_f1(pred, ref, raw=False) -> float:
    p, r = metric_tokens(pred, raw), metric_tokens(ref, raw)
    e = _empty_rule(p, r)
    if e is not None:
        return e
    common = sum((Counter(p) & Counter(r)).values())
    return 2.0 * common / (len(p) + len(r))


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred, ref, beta=1.0, raw=False) -> float:
    p, r = metric_tokens(pred, raw), metric_tokens(ref, raw)
    e = _empty_rule(p, r)
    if e is not None:
        return e
    lcs = lcs_length(p, r)
    if lcs == 0:
        return 0.0
    rec, prec = lcs / len(r), lcs / len(p)
    b2 = beta * beta
    return (1 + b2) * rec * prec / (rec + b2 * prec)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precisions(pred_tokens, ref_tokens, max_n=4) -> list[tuple[int, int]]:
    """Clipped n-gram match counts and candidate n-gram totals for n = 1..max_n."""
    out = []
    for n in range(1, max_n + 1):
        cand = _ngrams(pred_tokens, n)
        refc = _ngrams(ref_tokens, n)
        matches = sum(min(c, refc[g]) for g, c in cand.items())
        out.append((matches, sum(cand.values())))
    return out


def bleu(pred, ref, max_n=4, raw=False) -> float:
    """Sentence BLEU with uniform weights and add-one smoothing ``(m + 1) / (c + 1)`` for n >= 2.

    The unigram precision is left unsmoothed, so a candidate sharing no
    token with the reference scores 0.
    """
    p, r = metric_tokens(pred, raw), metric_tokens(ref, raw)
    if not p or not r:
        return 0.0
    precisions = modified_precisions(p, r, max_n)
    if precisions[0][0] == 0:
        return 0.0
    log_p = math.log(precisions[0][0] / precisions[0][1]) / max_n
    for matches, total in precisions[1:]:
        log_p += math.log((matches + 1) / (total + 1)) / max_n
    bp = min(1.0, math.exp(1.0 - len(r) / len(p)))
    return bp * math.exp(log_p)


def meteor_alignment(pred_tokens, ref_tokens) -> list[tuple[int, int]]:
    """Greedy left-to-right exact unigram alignment as (pred_pos, ref_pos) pairs."""
    used = set()
    pairs = []
    for i, tok in enumerate(pred_tokens):
        for j, rtok in enumerate(ref_tokens):
            if j not in used and rtok == tok:
                used.add(j)
                pairs.append((i, j))
                break
    return pairs


def meteor(pred, ref, raw=False) -> float:
    """Exact-match METEOR: harmonic F-mean (recall-weighted 9:1) times ``1 - 0.5 (chunks/m)^3``."""
    p, r = metric_tokens(pred, raw), metric_tokens(ref, raw)
    pairs = meteor_alignment(p, r)
    m = len(pairs)
    if m == 0:
        return 0.0
    prec, rec = m / len(p), m / len(r)
    fmean = 10 * prec * rec / (rec + 9 * prec)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    pen = 0.5 * (chunks / m) ** 3
    return fmean * (1 - pen)


def bertscore_recall(pred, ref, embedder, raw=False) -> float:
    """Greedy-matching recall: mean over reference tokens of the best cosine to any prediction token."""
    p, r = metric_tokens(pred, raw), metric_tokens(ref, raw)
    e = _empty_rule(p, r)
    if e is not None:
        return e
    vecs = np.asarray(embedder.embed(list(p) + list(r)), dtype=float)
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    sims = vecs[len(p):] @ vecs[:len(p)].T
    return float(np.clip(sims.max(axis=1), -1.0, 1.0).mean())


class JudgeResult(NamedTuple):
    score: int
    parse_failure: bool


def parse_judge(raw: str) -> JudgeResult:
    """Read ``score`` from the first JSON object embedded in ``raw``."""
    decoder = json.JSONDecoder()
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError:
            pos = raw.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            score = obj.get("score")
            if type(score) is int and score in (0, 1):
                return JudgeResult(score, False)
            return JudgeResult(0, True)
        pos = raw.find("{", pos + 1)
    return JudgeResult(0, True)


class MetricWeights:
    """Non-negative per-metric weights summing to 1."""

    def __init__(self, weights: Mapping[str, float] | None = None):
        if weights is None:
            weights = {m: 0.25 for m in MAIN_METRICS}
        unknown = set(weights) - set(ALL_METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        if any(w < 0 for w in weights.values()):
            raise ValueError("metric weights must be non-negative")
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"metric weights sum to {total}, not 1")
        self.weights = {m: float(weights[m]) for m in ALL_METRICS if weights.get(m, 0.0) > 0}

    @classmethod
    def parse(cls, spec: str | None) -> "MetricWeights":
        """``"default"``, a JSON object, or ``"rouge_l=0.5,bleu=0.5"``."""
        if spec is None or spec == "default":
            return cls()
        spec = spec.strip()
        if spec.startswith("{"):
            return cls(json.loads(spec))
        pairs = {}
        for part in spec.split(","):
            k, _, v = part.partition("=")
            pairs[k.strip()] = float(v)
        return cls(pairs)

    def __getitem__(self, metric):
        return self.weights.get(metric, 0.0)

    def __eq__(self, other):
        return isinstance(other, MetricWeights) and self.weights == other.weights

    def __repr__(self):
        return f"MetricWeights({self.weights})"

    def needs(self, metric) -> bool:
        return metric in self.weights

    def to_dict(self) -> dict:
        return dict(self.weights)

    def digest(self) -> str:
        blob = json.dumps(sorted(self.weights.items()), separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_WEIGHTS = MetricWeights()


@dataclass
class MetricReport:
    rouge_l: float = 0.0
    meteor: float = 0.0
    token_f1: float = 0.0
    bleu: float = 0.0
    em: float | None = None
    bertscore_recall: float | None = None
    judge: float | None = None
    weighted: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricReport":
        return cls(**{k: data.get(k) for k in cls.__dataclass_fields__ if k in data})


def weighted_score(values: Mapping[str, float | None], weights: MetricWeights) -> float:
    total = 0.0
    for m, w in weights.weights.items():
        v = values.get(m)
        if v is None:
            raise ValueError(f"metric {m!r} has weight {w} but no value")
        total += w * v
    return total


def score_answer(pred, references: Sequence[str], weights: MetricWeights = DEFAULT_WEIGHTS, *,
                 embedder=None, judge_raw: str | None = None, raw=False) -> MetricReport:
    """Per-metric maximum over references, combined by ``weights``.

    EM is always reported. BERTScore recall is computed when ``embedder`` is
    given; the judge value is parsed from ``judge_raw`` when given.
    """
    if not references:
        raise ValueError("references must be non-empty")
    report = MetricReport(
        rouge_l=max(rouge_l(pred, r, raw=raw) for r in references),
        meteor=max(meteor(pred, r, raw=raw) for r in references),
        token_f1=max(token_f1(pred, r, raw=raw) for r in references),
        bleu=max(bleu(pred, r, raw=raw) for r in references),
        em=float(max(exact_match(pred, r) for r in references)),
    )
    if embedder is not None:
        try:
            report.bertscore_recall = max(bertscore_recall(pred, r, embedder, raw=raw) for r in references)
        except Exception as exc:  # provider failure: metric omitted
            log.warning("bertscore_recall omitted: %s", exc)
    if judge_raw is not None:
        report.judge = float(parse_judge(judge_raw).score)
    report.weighted = weighted_score(report.to_dict(), weights)
    return report


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Field-wise mean; optional fields stay None unless every report has them."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for name in MetricReport.__dataclass_fields__:
        vals = [getattr(r, name) for r in reports]
        out[name] = None if any(v is None for v in vals) else float(np.mean(vals))
    return MetricReport(**out)


def score_dataset(items: Iterable[tuple[str, Sequence[str]]], weights: MetricWeights = DEFAULT_WEIGHTS,
                  raw=False) -> tuple[float, list[MetricReport]]:
    """Mean weighted score over ``(answer, references)`` pairs, plus per-item reports."""
    reports = [score_answer(a, refs, weights, raw=raw) for a, refs in items]
    if not reports:
        raise ValueError("score_dataset needs at least one item")
    return float(np.mean([r.weighted for r in reports])), reports
