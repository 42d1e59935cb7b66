"""Post-hoc aggregation of run records: interaction tables, preferences, baselines, ablations, stability."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .controllers import DISPLAY_NAMES
from .environment import subsample
from .space import OFF, SearchSpace, SpaceError

log = logging.getLogger(__name__)

WIN_TOL = 1e-9


@dataclass
class InteractionCell:
    env: str
    algorithm: str
    seed_scores: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.seed_scores))

    @property
    def std(self) -> float:
        # population std (divide by n)
        return float(np.std(self.seed_scores))

    def format(self, digits=3) -> str:
        return f"{self.mean:.{digits}f}±{self.std:.{digits}f}"


def aggregate(scores: Mapping[tuple[str, str], Sequence[float]]) -> dict[tuple[str, str], InteractionCell]:
    """Mean and population std of best-of-budget scores per (env, algorithm)."""
    out = {}
    for (env, alg), vals in scores.items():
        vals = [float(v) for v in vals]
        if not vals:
            log.warning("no seeds for %s / %s; cell omitted", env, alg)
            continue
        out[(env, alg)] = InteractionCell(env, alg, vals)
    return out


def aggregate_records(records: Iterable) -> dict[tuple[str, str], InteractionCell]:
    """Group :class:`~ragsearch.engine.RunRecord` objects by (env, algorithm), sorted by seed."""
    groups = defaultdict(list)
    for rec in records:
        groups[(rec.env_name, rec.algorithm)].append((rec.seed, rec.best_reward))
    return aggregate({k: [r for _, r in sorted(v)] for k, v in groups.items()})


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Descending ranks starting at 1; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def wins_and_ranks(table: Mapping[tuple[str, str], InteractionCell], envs: Sequence[str] | None = None,
                   algorithms: Sequence[str] | None = None) -> dict[str, tuple[int, float]]:
    """Per algorithm: number of env columns where it attains the top mean, and mean rank over columns."""
    envs = list(envs) if envs is not None else list(dict.fromkeys(e for e, _ in table))
    algorithms = list(algorithms) if algorithms is not None else list(dict.fromkeys(a for _, a in table))
    wins = {a: 0 for a in algorithms}
    ranks = {a: [] for a in algorithms}
    for env in envs:
        present = [a for a in algorithms if (env, a) in table]
        if len(present) < len(algorithms):
            log.warning("env %s covers %d/%d algorithms", env, len(present), len(algorithms))
        if not present:
            continue
        means = [table[(env, a)].mean for a in present]
        top = max(means)
        for a, m, r in zip(present, means, average_ranks(means)):
            ranks[a].append(float(r))
            if m >= top - WIN_TOL:
                wins[a] += 1
    return {a: (wins[a], float(np.mean(ranks[a])) if ranks[a] else math.nan) for a in algorithms}


def module_preferences(best_configs: Mapping[str, Sequence], dims: Sequence[str] | None = None
                       ) -> dict[str, dict[str, dict[str, float]]]:
    """Normalized option frequencies per (algorithm, dimension) over best configurations.

    ``best_configs`` maps an algorithm to its runs' best configs, each a
    :class:`PipelineConfig` or a plain ``{dimension: label}`` mapping.
    """
    out = {}
    for alg, configs in best_configs.items():
        labels = [c.labels if hasattr(c, "labels") else dict(c) for c in configs]
        if not labels:
            out[alg] = {}
            continue
        names = dims if dims is not None else list(labels[0])
        out[alg] = {}
        for d in names:
            counts = Counter(lab[d] for lab in labels)
            out[alg][d] = {k: v / len(labels) for k, v in sorted(counts.items(), key=lambda kv: str(kv[0]))}
    return out


def random_baseline_delta_from_scores(scores: Mapping[str, float], baseline: float) -> dict[str, float]:
    return {a: float(s) - float(baseline) for a, s in scores.items()}


def random_baseline_delta(records: Sequence, random_id: str = "random") -> tuple[float, dict[str, float]]:
    """Baseline is the mean reward over every trial of the random runs; deltas use best-of-budget."""
    rand = [r for r in records if r.algorithm == random_id]
    if not rand:
        raise ValueError("random_baseline_delta needs at least one random-search run")
    baseline = float(np.mean([t.reward for r in rand for t in r.trials]))
    best = defaultdict(list)
    for r in records:
        best[r.algorithm].append(r.best_reward)
    return baseline, random_baseline_delta_from_scores({a: float(np.mean(v)) for a, v in best.items()}, baseline)


# -- ablations --------------------------------------------------------------

ABLATABLE_MODULES = ("rewriter", "reranker", "pruner")


@dataclass(frozen=True)
class AblationSpec:
    kind: str  # "remove_module" | "fix_dimension"
    target: str | tuple

    def __post_init__(self):
        if self.kind == "remove_module":
            if self.target not in ABLATABLE_MODULES:
                raise ValueError(f"remove_module target must be one of {ABLATABLE_MODULES}, got {self.target!r}")
        elif self.kind == "fix_dimension":
            if not (isinstance(self.target, (tuple, list)) and len(self.target) == 2):
                raise ValueError("fix_dimension target must be (dimension, value)")
            object.__setattr__(self, "target", tuple(self.target))
        else:
            raise ValueError(f"unknown ablation kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "remove_module":
            return f"-{self.target}"
        return f"{self.target[0]}={self.target[1]}"

    @classmethod
    def from_dict(cls, d: Mapping) -> "AblationSpec":
        return cls(d["kind"], d["target"])


def _passthrough_value(dim):
    """``off`` when present; a numeric knob of a removed stage (e.g. its top-k) keeps its largest value."""
    if OFF in dim.values:
        return OFF
    try:
        return max(dim.values, key=float)
    except ValueError:
        raise SpaceError(f"dimension {dim.name!r} has no {OFF!r} value to collapse to") from None


def build_ablation_space(space: SearchSpace, spec: AblationSpec) -> SearchSpace:
    """Collapse the targeted dimensions to one value; everything else is left untouched.

    Removing a module sets its selector to ``off``; its numeric knobs collapse
    to their largest value, so the stage passes candidates through untruncated.
    """
    if spec.kind == "remove_module":
        dims = [d for d in space.dimensions if d.module_tag == spec.target]
        if not dims:
            raise SpaceError(f"no dimension belongs to module {spec.target!r}")
        out = space
        for d in dims:
            out = out.replace_dimension(d.name, (_passthrough_value(d),))
        return out
    name, value = spec.target
    if name not in space:
        raise SpaceError(f"unknown dimension {name!r}")
    values = space[name].values
    match = [v for v in values if v == value or str(v) == str(value)]
    if not match:
        raise ValueError(f"{value!r} is not a value of {name!r}")
    return space.replace_dimension(name, (match[0],))


@dataclass
class AblationRow:
    variant: str
    algorithm: str
    seed_scores: list[float]
    delta: float = 0.0

    @property
    def mean(self):
        return float(np.mean(self.seed_scores))


def ablation_study(env, space: SearchSpace, specs: Sequence[AblationSpec], algorithms: Sequence[str],
                   seeds: Sequence[int], budget: int, **run_kwargs) -> list[AblationRow]:
    """Rerun each algorithm on the full space and on every ablated variant; delta is versus full."""
    from .engine import run_search

    rows = []
    variants = [("full", space)] + [(s.label, build_ablation_space(space, s)) for s in specs]
    for alg in algorithms:
        full_mean = None
        for label, sp in variants:
            scores = [run_search(env, sp, alg, seed, budget, **run_kwargs).best_reward for seed in seeds]
            row = AblationRow(label, alg, scores)
            if full_mean is None:
                full_mean = row.mean
            row.delta = row.mean - full_mean
            rows.append(row)
    return rows


@dataclass
class StabilityRow:
    size: int
    algorithm: str
    seed_scores: list[float] = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.seed_scores))

    @property
    def std(self):
        return float(np.std(self.seed_scores))


def stability_study(env, sizes: Sequence[int], algorithms: Sequence[str], seeds: Sequence[int], budget: int,
                    space: SearchSpace | None = None, **run_kwargs) -> list[StabilityRow]:
    """For each proxy size, subsample per seed, search, and report cross-seed mean/std of best scores."""
    from .engine import run_search

    space = space if space is not None else env.space
    n_total = len(env.qa) if hasattr(env, "qa") else None
    rows = []
    for size in sizes:
        if n_total is not None and size > n_total:
            raise ValueError(f"size {size} exceeds the {n_total} available QA items")
        for alg in algorithms:
            row = StabilityRow(size, alg)
            for seed in seeds:
                sub = subsample(env, size, seed)
                row.seed_scores.append(run_search(sub, space, alg, seed, budget, **run_kwargs).best_reward)
            rows.append(row)
    return rows


# -- tabular output ---------------------------------------------------------

def _csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _fmt(x, digits=4):
    return f"{x:.{digits}f}"


def trajectory_csv(record) -> str:
    return _csv([("trial", "reward", "best_so_far")] +
                [(i, _fmt(r, 6), _fmt(b, 6)) for i, (r, b) in enumerate(zip(record.rewards, record.best_so_far))])


def interaction_csv(table, envs, algorithms, digits=3) -> str:
    wr = wins_and_ranks(table, envs, algorithms)
    rows = [("algorithm", *envs, "wins", "rank")]
    for a in algorithms:
        cells = [table[(e, a)].format(digits) if (e, a) in table else "" for e in envs]
        rows.append((DISPLAY_NAMES.get(a, a), *cells, wr[a][0], _fmt(wr[a][1], 1)))
    return _csv(rows)


def preferences_csv(prefs) -> str:
    rows = [("algorithm", "dimension", "option", "frequency")]
    for alg, dims in prefs.items():
        for d, freqs in dims.items():
            for opt, f in freqs.items():
                rows.append((alg, d, opt, _fmt(f, 4)))
    return _csv(rows)


def baseline_csv(baseline, deltas, scores) -> str:
    rows = [("algorithm", "score", "delta", "baseline")]
    for a in sorted(deltas, key=lambda k: -deltas[k]):
        rows.append((DISPLAY_NAMES.get(a, a), _fmt(scores[a]), f"{deltas[a]:+.4f}", _fmt(baseline)))
    return _csv(rows)


def emit_plots(records: Sequence, out_dir: str | Path, envs: Sequence[str] | None = None,
               algorithms: Sequence[str] | None = None, render: bool = False) -> list[Path]:
    """Write trajectory, interaction-table, preference and baseline CSV files; optionally PNGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    envs = list(envs) if envs is not None else list(dict.fromkeys(r.env_name for r in records))
    algorithms = list(algorithms) if algorithms is not None else list(dict.fromkeys(r.algorithm for r in records))

    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for r in records:
        p = traj_dir / f"{r.env_name}__{r.algorithm}__{r.seed}.csv"
        p.write_text(trajectory_csv(r))
        written.append(p)

    table = aggregate_records(records)
    p = out / "interaction_table.csv"
    p.write_text(interaction_csv(table, envs, algorithms))
    written.append(p)

    best = defaultdict(list)
    for r in records:
        best[r.algorithm].append(r.best_trial.config)
    p = out / "module_preferences.csv"
    p.write_text(preferences_csv(module_preferences({a: best[a] for a in algorithms})))
    written.append(p)

    if any(r.algorithm == "random" for r in records):
        baseline, deltas = random_baseline_delta(records)
        scores = {a: d + baseline for a, d in deltas.items()}
        p = out / "random_baseline.csv"
        p.write_text(baseline_csv(baseline, deltas, scores))
        written.append(p)

    if render:
        written += _render(records, out)
    return written


def _render(records, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for env in dict.fromkeys(r.env_name for r in records):
        fig, ax = plt.subplots(figsize=(6, 4))
        for r in records:
            if r.env_name == env:
                ax.plot(range(1, len(r.trials) + 1), r.best_so_far, label=f"{DISPLAY_NAMES.get(r.algorithm, r.algorithm)} s{r.seed}")
        ax.set_xlabel("trial")
        ax.set_ylabel("best so far")
        ax.set_title(env)
        ax.legend(fontsize=6, ncol=2)
        p = out / f"trajectories_{env}.png"
        fig.tight_layout()
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths
