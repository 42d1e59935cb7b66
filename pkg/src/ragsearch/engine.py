"""The budgeted search loop: propose, evaluate with caching and time bounds, observe, log."""
from __future__ import annotations

import concurrent.futures as cf
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .controllers import Controller, make_controller
from .environment import Environment, SyntheticEnvironment, synthetic_reward
from .gateway import DEFAULT_TIMEOUT
from .metrics import DEFAULT_WEIGHTS, MetricReport, MetricWeights, mean_report, score_answer
from .pipeline import IndexCache, PipelineTrace, run_pipeline
from .space import PipelineConfig, SearchSpace, canonical_key

log = logging.getLogger(__name__)


class EvaluationFailure(RuntimeError):
    """A configuration could not be evaluated; the trial receives reward 0."""


@dataclass
class Limits:
    """Evaluation resources. ``timeout`` of None means ``len(qa) * per_call_timeout``."""

    workers: int = 1
    timeout: float | None = None
    per_call_timeout: float = DEFAULT_TIMEOUT

    def config_timeout(self, n_items: int) -> float:
        return self.timeout if self.timeout is not None else n_items * self.per_call_timeout


@dataclass
class Evaluation:
    reward: float
    report: MetricReport | None
    traces: list[PipelineTrace] = field(default_factory=list)


def evaluate_config(config: PipelineConfig, env, gateway=None, weights: MetricWeights = DEFAULT_WEIGHTS,
                    limits: Limits | None = None, index_cache: IndexCache | None = None,
                    judge: bool = False) -> Evaluation:
    """Run the pipeline on every QA item and score the answers.

    Items run concurrently up to ``limits.workers``; results are aggregated
    in QA order. Any fatal trace or exceeding the per-config time limit
    raises :class:`EvaluationFailure`.
    """
    if isinstance(env, SyntheticEnvironment):
        return Evaluation(synthetic_reward(env, config), None)
    limits = limits or Limits()
    cache = index_cache if index_cache is not None else IndexCache()
    embedder = gateway.default_embedder if weights.needs("bertscore_recall") else None
    use_judge = judge or weights.needs("judge")

    def one(item):
        trace = run_pipeline(config, item, env, gateway, cache)
        if trace.fatal:
            return trace, None
        judge_raw = None
        if use_judge:
            try:
                judge_raw = gateway.judge(item.question, trace.answer, item.references)
            except Exception as exc:
                trace.failures.append(f"judge: {exc}")
                judge_raw = ""
        report = score_answer(trace.answer, item.references, weights, embedder=embedder, judge_raw=judge_raw)
        return trace, report

    deadline = limits.config_timeout(len(env.qa))
    pool = cf.ThreadPoolExecutor(max_workers=max(1, limits.workers))
    try:
        futures = [pool.submit(one, item) for item in env.qa]
        done, pending = cf.wait(futures, timeout=deadline)
        if pending:
            for f in pending:
                f.cancel()
            raise EvaluationFailure(f"evaluation exceeded {deadline:.1f}s ({len(pending)} items unfinished)")
        results = [f.result() for f in futures]
    except EvaluationFailure:
        raise
    except Exception as exc:
        raise EvaluationFailure(f"{type(exc).__name__}: {exc}") from exc
    finally:
        pool.shutdown(wait=False, cancel_futures=True)

    traces = [t for t, _ in results]
    fatal = [t for t in traces if t.fatal]
    if fatal:
        raise EvaluationFailure(f"{len(fatal)} item(s) failed: {fatal[0].failures[-1]}")
    reports = [r for _, r in results]
    reward = sum(r.weighted for r in reports) / len(reports)
    agg = mean_report(reports)
    agg.weighted = reward
    return Evaluation(reward, agg, traces)


# -- cache ------------------------------------------------------------------

@dataclass(frozen=True)
class CacheKey:
    config_key: str
    qa_file_hash: str
    corpus_file_hash: str
    modality: str
    eval_mode: str

    def digest(self) -> str:
        blob = json.dumps([self.config_key, self.qa_file_hash, self.corpus_file_hash,
                           self.modality, self.eval_mode], separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def make_cache_key(config: PipelineConfig, env, weights: MetricWeights = DEFAULT_WEIGHTS) -> CacheKey:
    if isinstance(env, SyntheticEnvironment):
        return CacheKey(canonical_key(config).decode(), env.digest(), "", env.modality, "synthetic")
    return CacheKey(canonical_key(config).decode(), env.qa_file_hash, env.corpus_file_hash,
                    env.modality, weights.digest())


class EvalCache:
    """Reward cache keyed by :class:`CacheKey`, in memory and optionally on disk.

    On disk each entry is one JSON file named by the key digest, written
    atomically. Unreadable entries are treated as misses and removed.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, tuple[float, dict | None]] = {}
        self._lock = threading.Lock()

    def _path(self, digest):
        return self.directory / f"{digest}.json"

    def get(self, key: CacheKey) -> tuple[float, MetricReport | None] | None:
        digest = key.digest()
        with self._lock:
            hit = self._mem.get(digest)
        if hit is None and self.directory is not None:
            path = self._path(digest)
            if path.exists():
                try:
                    data = json.loads(path.read_text())
                    hit = (float(data["reward"]), data.get("report"))
                except (OSError, ValueError, KeyError, TypeError) as exc:
                    log.warning("dropping corrupt cache entry %s: %s", path.name, exc)
                    path.unlink(missing_ok=True)
                    return None
                with self._lock:
                    self._mem[digest] = hit
        if hit is None:
            return None
        reward, report = hit
        return reward, MetricReport.from_dict(report) if report is not None else None

    def put(self, key: CacheKey, reward: float, report: MetricReport | None = None) -> None:
        digest = key.digest()
        rep = report.to_dict() if report is not None else None
        with self._lock:
            self._mem[digest] = (float(reward), rep)
        if self.directory is not None:
            payload = json.dumps({"key": key.__dict__, "reward": float(reward), "report": rep}, sort_keys=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                fh.write(payload)
            os.replace(tmp, self._path(digest))

    def __len__(self):
        return len(self._mem)


# -- records ----------------------------------------------------------------

@dataclass
class TrialRecord:
    index: int
    config: PipelineConfig
    reward: float
    per_metric: MetricReport | None
    cache_hit: bool
    failed: bool
    wall_time: float
    error: str | None = None

    def to_dict(self, include_timing=True) -> dict:
        out = {
            "index": self.index,
            "config": self.config.labels,
            "reward": self.reward,
            "per_metric": self.per_metric.to_dict() if self.per_metric is not None else None,
            "cache_hit": self.cache_hit,
            "failed": self.failed,
            "error": self.error,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class RunRecord:
    env_name: str
    qa_file_hash: str
    corpus_file_hash: str
    space_digest: str
    algorithm: str
    params: dict
    seed: int
    budget: int
    trials: list[TrialRecord] = field(default_factory=list)
    total_time: float = 0.0
    overhead_time: float = 0.0
    space: SearchSpace | None = field(default=None, repr=False)

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.trials]

    @property
    def best_so_far(self) -> list[float]:
        out, best = [], float("-inf")
        for r in self.rewards:
            best = max(best, r)
            out.append(best)
        return out

    @property
    def best_reward(self) -> float:
        return max(self.rewards) if self.trials else float("nan")

    @property
    def best_trial(self) -> TrialRecord:
        return max(self.trials, key=lambda t: (t.reward, -t.index))

    @property
    def eval_count(self) -> int:
        return sum(not t.failed for t in self.trials)

    def meta(self, include_timing=True) -> dict:
        out = {
            "env": {"name": self.env_name, "qa_file_hash": self.qa_file_hash,
                    "corpus_file_hash": self.corpus_file_hash},
            "space_digest": self.space_digest,
            "space": self.space.to_dict() if self.space is not None else None,
            "algorithm": self.algorithm,
            "params": self.params,
            "seed": self.seed,
            "budget": self.budget,
            "best_reward": self.best_reward,
            "best_so_far": self.best_so_far,
            "eval_count": self.eval_count,
        }
        if include_timing:
            out["total_time"] = self.total_time
            out["overhead_time"] = self.overhead_time
        return out

    def to_json(self, include_timing=True) -> str:
        payload = {"meta": self.meta(include_timing),
                   "trials": [t.to_dict(include_timing) for t in self.trials]}
        return json.dumps(payload, sort_keys=True)

    def write(self, out_dir: str | Path) -> Path:
        """Write ``run.meta``, ``trials.log`` (one JSON record per line) and ``best.config``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.meta").write_text(json.dumps(self.meta(), indent=2, sort_keys=True) + "\n")
        with open(out / "trials.log", "w") as fh:
            for t in self.trials:
                fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
        best = self.best_trial
        (out / "best.config").write_text(json.dumps(
            {"index": best.index, "reward": best.reward, "config": best.config.labels},
            indent=2, sort_keys=True) + "\n")
        return out

    @classmethod
    def read(cls, run_dir: str | Path) -> "RunRecord":
        run_dir = Path(run_dir)
        meta = json.loads((run_dir / "run.meta").read_text())
        space = SearchSpace.from_dict(meta["space"])
        trials = []
        with open(run_dir / "trials.log") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                report = MetricReport.from_dict(d["per_metric"]) if d.get("per_metric") else None
                trials.append(TrialRecord(d["index"], space.from_labels(d["config"]), d["reward"], report,
                                          d["cache_hit"], d["failed"], d.get("wall_time", 0.0), d.get("error")))
        env = meta["env"]
        return cls(env["name"], env["qa_file_hash"], env["corpus_file_hash"], meta["space_digest"],
                   meta["algorithm"], meta["params"], meta["seed"], meta["budget"], trials,
                   meta.get("total_time", 0.0), meta.get("overhead_time", 0.0), space)


def _env_hashes(env):
    if isinstance(env, SyntheticEnvironment):
        return env.digest(), ""
    return env.qa_file_hash, env.corpus_file_hash


def run_search(env, space: SearchSpace, algorithm: str | Controller, seed: int, budget: int,
               gateway=None, cache: EvalCache | None = None, *, weights: MetricWeights = DEFAULT_WEIGHTS,
               limits: Limits | None = None, params: dict | None = None,
               index_cache: IndexCache | None = None, dump_traces: str | Path | None = None,
               progress=None) -> RunRecord:
    """Spend ``budget`` propose/evaluate/observe cycles and return the full log.

    Cache hits and failed (zero-reward) trials are observed like any other
    trial. ``algorithm`` is a registry id or a ready controller instance.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    start = time.perf_counter()
    if isinstance(algorithm, Controller):
        ctrl = algorithm
        if ctrl.budget is None:
            ctrl.budget = budget
    else:
        ctrl = make_controller(algorithm, space, seed, budget, params)
    cache = cache if cache is not None else EvalCache()
    index_cache = index_cache if index_cache is not None else IndexCache()
    qa_hash, corpus_hash = _env_hashes(env)
    record = RunRecord(env.name, qa_hash, corpus_hash, space.digest(), ctrl.id, dict(ctrl.params),
                       seed, budget, space=space)
    if dump_traces is not None:
        Path(dump_traces).mkdir(parents=True, exist_ok=True)

    for i in range(budget):
        t0 = time.perf_counter()
        config = ctrl.propose()
        key = make_cache_key(config, env, weights)
        hit = cache.get(key)
        failed, error, report = False, None, None
        if hit is not None:
            reward, report = hit
        else:
            try:
                ev = evaluate_config(config, env, gateway, weights, limits, index_cache)
                reward, report = ev.reward, ev.report
                cache.put(key, reward, report)
                if dump_traces is not None and ev.traces:
                    with open(Path(dump_traces) / f"trial_{i:03d}.jsonl", "w") as fh:
                        for tr in ev.traces:
                            fh.write(json.dumps(tr.to_dict(), sort_keys=True) + "\n")
            except EvaluationFailure as exc:
                log.warning("trial %d failed: %s", i, exc)
                reward, failed, error = 0.0, True, str(exc)
        ctrl.observe(config, reward, failed=failed)
        trial = TrialRecord(i, config, reward, report, hit is not None, failed,
                            time.perf_counter() - t0, error)
        record.trials.append(trial)
        if progress is not None:
            progress(trial)

    record.total_time = time.perf_counter() - start
    record.overhead_time = record.total_time - sum(t.wall_time for t in record.trials)
    return record
