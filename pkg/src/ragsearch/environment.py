"""Proxy QA environments and synthetic landscapes with known optima."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .space import PipelineConfig, SearchSpace, canonical_key, load_space

MODALITY_TEXT = "text"
MODALITY_SYNTHETIC = "synthetic"
ENUMERATION_BOUND = 10**6


class EnvError(ValueError):
    pass


class LoadError(EnvError):
    """A QA or corpus file failed to parse or validate."""


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    references: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.question.strip():
            raise ValueError(f"QA item {self.id!r}: empty question")
        if not self.references:
            raise ValueError(f"QA item {self.id!r}: no references")


@dataclass(frozen=True)
class CorpusDoc:
    id: str
    text: str
    image_path: str | None = None


@dataclass(frozen=True)
class Environment:
    name: str
    qa: tuple[QAItem, ...]
    corpus: tuple[CorpusDoc, ...]
    qa_file_hash: str
    corpus_file_hash: str
    modality: str = MODALITY_TEXT

    def __len__(self):
        return len(self.qa)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def qa_to_jsonl(items: Sequence[QAItem]) -> bytes:
    lines = [json.dumps({"id": q.id, "question": q.question, "answers": list(q.references)},
                        ensure_ascii=False) for q in items]
    return ("\n".join(lines) + "\n").encode("utf-8")


def corpus_to_jsonl(docs: Sequence[CorpusDoc]) -> bytes:
    lines = []
    for d in docs:
        rec = {"id": d.id, "text": d.text}
        if d.image_path is not None:
            rec["image_path"] = d.image_path
        lines.append(json.dumps(rec, ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _records(raw: bytes, path):
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise LoadError(f"{path}:{lineno}: record is not an object")
        yield lineno, rec


def parse_qa(raw: bytes, path="<qa>") -> list[QAItem]:
    items = []
    for lineno, rec in _records(raw, path):
        for key in ("id", "question", "answers"):
            if key not in rec:
                raise LoadError(f"{path}:{lineno}: missing field {key!r}")
        answers = rec["answers"]
        if isinstance(answers, str):
            answers = [answers]
        if not isinstance(answers, list) or not answers:
            raise LoadError(f"{path}:{lineno}: empty references for id {rec['id']!r}")
        if not str(rec["question"]).strip():
            raise LoadError(f"{path}:{lineno}: empty question for id {rec['id']!r}")
        items.append(QAItem(str(rec["id"]), str(rec["question"]), tuple(str(a) for a in answers)))
    return items


def parse_corpus(raw: bytes, path="<corpus>") -> list[CorpusDoc]:
    docs, seen = [], set()
    for lineno, rec in _records(raw, path):
        for key in ("id", "text"):
            if key not in rec:
                raise LoadError(f"{path}:{lineno}: missing field {key!r}")
        doc_id = str(rec["id"])
        if doc_id in seen:
            raise LoadError(f"{path}:{lineno}: duplicate corpus id {doc_id!r}")
        if not str(rec["text"]).strip():
            raise LoadError(f"{path}:{lineno}: empty text for id {doc_id!r}")
        seen.add(doc_id)
        docs.append(CorpusDoc(doc_id, str(rec["text"]), rec.get("image_path")))
    return docs


def load_environment(qa_path, corpus_path, name=None) -> Environment:
    """Load a QA file and a corpus file (line-delimited JSON records).

    Hashes are taken over the raw file bytes; record order is preserved.
    """
    qa_raw = Path(qa_path).read_bytes()
    corpus_raw = Path(corpus_path).read_bytes()
    return Environment(
        name=name or Path(qa_path).stem,
        qa=tuple(parse_qa(qa_raw, qa_path)),
        corpus=tuple(parse_corpus(corpus_raw, corpus_path)),
        qa_file_hash=_sha256(qa_raw),
        corpus_file_hash=_sha256(corpus_raw),
    )


def make_environment(name, qa: Sequence[QAItem], corpus: Sequence[CorpusDoc]) -> Environment:
    """Build an in-memory environment; hashes cover the canonical JSONL serialization."""
    return Environment(name, tuple(qa), tuple(corpus),
                       _sha256(qa_to_jsonl(qa)), _sha256(corpus_to_jsonl(corpus)))


def save_environment(env: Environment, qa_path, corpus_path) -> None:
    Path(qa_path).write_bytes(qa_to_jsonl(env.qa))
    Path(corpus_path).write_bytes(corpus_to_jsonl(env.corpus))


# -- synthetic landscapes ---------------------------------------------------

@dataclass
class SyntheticEnvironment:
    """Additive landscape over a search space, for testing controllers offline.

    ``unary_weights`` maps ``(dimension, label)`` to a utility and
    ``pairwise_terms`` maps ``(dim_a, label_a, dim_b, label_b)`` to an
    interaction utility. Rewards are rescaled to [0, 1] by the enumerated
    minimum and maximum; a constant landscape maps everything to 0.5.
    Gaussian noise is a deterministic function of ``(noise_seed, config)``.
    """

    space: SearchSpace
    unary_weights: dict = field(default_factory=dict)
    pairwise_terms: dict = field(default_factory=dict)
    noise_sigma: float = 0.0
    noise_seed: int = 0
    name: str = "synthetic"
    _table: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    modality = MODALITY_SYNTHETIC

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        for (dim, label) in self.unary_weights:
            self.space[dim].index(label)
        for (da, la, db, lb) in self.pairwise_terms:
            self.space[da].index(la)
            self.space[db].index(lb)

    # analytic value, no rescaling
    def raw_value(self, config: PipelineConfig) -> float:
        labels = config.labels
        total = 0.0
        for (dim, label), w in self.unary_weights.items():
            if labels[dim] == label:
                total += w
        for (da, la, db, lb), w in self.pairwise_terms.items():
            if labels[da] == la and labels[db] == lb:
                total += w
        return total

    def raw_table(self) -> np.ndarray:
        """Raw values for every index tuple; invalid tuples hold NaN."""
        if self._table is None:
            n = math.prod(self.space.sizes)
            if n > ENUMERATION_BOUND:
                raise EnvError(
                    f"space has {n} index tuples, above the enumeration bound {ENUMERATION_BOUND}")
            sizes = self.space.sizes
            ndim = len(sizes)
            table = np.zeros(sizes)
            for (dim, label), w in self.unary_weights.items():
                pos = self.space.position(dim)
                vec = np.zeros(sizes[pos])
                vec[self.space[dim].index(label)] = w
                shape = [1] * ndim
                shape[pos] = sizes[pos]
                table = table + vec.reshape(shape)
            for (da, la, db, lb), w in self.pairwise_terms.items():
                pa, pb = self.space.position(da), self.space.position(db)
                ia, ib = self.space[da].index(la), self.space[db].index(lb)
                if pa == pb:
                    if ia == ib:
                        vec = np.zeros(sizes[pa])
                        vec[ia] = w
                        shape = [1] * ndim
                        shape[pa] = sizes[pa]
                        table = table + vec.reshape(shape)
                    continue
                mat = np.zeros((sizes[pa], sizes[pb]))
                mat[ia, ib] = w
                if pa > pb:
                    mat, pa, pb = mat.T, pb, pa
                shape = [1] * ndim
                shape[pa], shape[pb] = sizes[pa], sizes[pb]
                table = table + mat.reshape(shape)
            table = np.where(self.space.validity_mask(), table, np.nan)
            self._table = table
        return self._table

    def value_range(self) -> tuple[float, float]:
        t = self.raw_table()
        return float(np.nanmin(t)), float(np.nanmax(t))

    def noiseless_reward(self, config: PipelineConfig) -> float:
        lo, hi = self.value_range()
        if hi - lo <= 0:
            return 0.5
        return (self.raw_value(config) - lo) / (hi - lo)

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "unary_weights": [{"dim": d, "value": v, "weight": w}
                              for (d, v), w in sorted(self.unary_weights.items())],
            "pairwise_terms": [{"dim_a": da, "value_a": va, "dim_b": db, "value_b": vb, "weight": w}
                               for (da, va, db, vb), w in sorted(self.pairwise_terms.items())],
            "noise_sigma": self.noise_sigma,
            "noise_seed": self.noise_seed,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: Mapping, base_dir=None) -> "SyntheticEnvironment":
        space_ref = data.get("space", "default-text")
        if isinstance(space_ref, Mapping):
            space = SearchSpace.from_dict(space_ref)
        else:
            if base_dir is not None and space_ref != "default-text" and not Path(space_ref).is_absolute():
                space_ref = Path(base_dir) / space_ref
            space = load_space(space_ref)
        unary = {(u["dim"], str(u["value"])): float(u["weight"]) for u in data.get("unary_weights", [])}
        pair = {(p["dim_a"], str(p["value_a"]), p["dim_b"], str(p["value_b"])): float(p["weight"])
                for p in data.get("pairwise_terms", [])}
        return cls(space, unary, pair, float(data.get("noise_sigma", 0.0)),
                   int(data.get("noise_seed", 0)), data.get("name", "synthetic"))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return _sha256(blob)


def load_synthetic(path) -> SyntheticEnvironment:
    with open(path) as fh:
        data = json.load(fh)
    data.setdefault("name", Path(path).stem)
    return SyntheticEnvironment.from_dict(data, base_dir=Path(path).parent)


def save_synthetic(senv: SyntheticEnvironment, path) -> None:
    with open(path, "w") as fh:
        json.dump(senv.to_dict(), fh, indent=2)
        fh.write("\n")


def _noise_draw(noise_seed: int, config: PipelineConfig) -> float:
    digest = hashlib.sha256(str(noise_seed).encode() + b"|" + canonical_key(config)).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return float(rng.standard_normal())


def synthetic_reward(senv: SyntheticEnvironment, config: PipelineConfig) -> float:
    """Rescaled landscape value plus config-keyed Gaussian noise, clamped to [0, 1]."""
    value = senv.noiseless_reward(config)
    if senv.noise_sigma > 0:
        value += senv.noise_sigma * _noise_draw(senv.noise_seed, config)
    return min(1.0, max(0.0, value))


def synthetic_optimum(senv: SyntheticEnvironment) -> tuple[PipelineConfig, float]:
    """Exhaustive noiseless argmax; ties go to the smallest canonical key."""
    table = senv.raw_table()
    best = np.nanmax(table)
    ties = np.argwhere(np.isclose(table, best, rtol=0, atol=1e-12))
    configs = [PipelineConfig(senv.space, tuple(int(i) for i in t)) for t in ties]
    winner = min(configs, key=canonical_key)
    return winner, senv.noiseless_reward(winner)


def generate_synthetic(space: SearchSpace, seed: int, n_pairwise: int = 0,
                       noise_sigma: float = 0.0, pairwise_scale: float = 0.5,
                       name="synthetic") -> SyntheticEnvironment:
    """Random landscape: N(0,1) unary weights and ``n_pairwise`` interaction terms."""
    rng = np.random.default_rng(seed)
    unary = {}
    for d in space.dimensions:
        for v in d.values:
            unary[(d.name, v)] = round(float(rng.standard_normal()), 6)
    pair = {}
    multi = [d for d in space.dimensions if len(d) > 1]
    if len(multi) >= 2:
        for _ in range(n_pairwise):
            a, b = rng.choice(len(multi), size=2, replace=False)
            da, db = multi[a], multi[b]
            key = (da.name, da.values[rng.integers(len(da))], db.name, db.values[rng.integers(len(db))])
            pair[key] = round(float(pairwise_scale * rng.standard_normal()), 6)
    return SyntheticEnvironment(space, unary, pair, noise_sigma, seed, name)


# -- subsampling ------------------------------------------------------------

def subsample(env, n: int, seed: int, shuffle: bool = True):
    """Seeded proxy of size ``n``.

    For a QA environment: the first ``n`` items of a seeded uniform shuffle
    (or of stored order when ``shuffle`` is false); corpus unchanged; hashes
    recomputed over the materialized subset.

    For a synthetic environment ``noise_sigma`` is read as per-item noise,
    so the proxy of size ``n`` carries ``noise_sigma / sqrt(n)`` with a noise
    seed mixed from ``seed``.
    """
    if isinstance(env, SyntheticEnvironment):
        if n < 1:
            raise ValueError("n must be >= 1")
        mixed = int.from_bytes(hashlib.sha256(f"{env.noise_seed}:{seed}:{n}".encode()).digest()[:4], "little")
        out = replace(env, noise_sigma=env.noise_sigma / math.sqrt(n), noise_seed=mixed,
                      name=f"{env.name}@{n}")
        out._table = env._table
        return out
    if not 1 <= n <= len(env.qa):
        raise ValueError(f"subset size {n} outside [1, {len(env.qa)}]")
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(env.qa))
    else:
        order = np.arange(len(env.qa))
    qa = tuple(env.qa[i] for i in order[:n])
    return Environment(env.name, qa, env.corpus, _sha256(qa_to_jsonl(qa)),
                       env.corpus_file_hash, env.modality)
