"""Episode loop, seeded batch experiments, grid search and result files.

Seed derivation
---------------
Episode ``i`` of a batch uses ``seed = base_seed + i``.  Inside an episode
every stream is a Philox generator keyed by ``SeedSequence(seed, spawn_key=k)``:

* ``k = (0,)`` drives the environment (initial state and true transitions);
* ``k = (1,)`` seeds the planner's initial particle filter;
* ``k = (2, t)`` drives planning and re-rooting at step ``t``.

Results therefore do not depend on how episodes are spread over workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import traceback
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .core import PomdpModel, discounted_return, expected_reward, exact_belief_update
from .domains import (
    LayoutInvalid,
    TigerParams,
    build_layout,
    model_from_layout,
    tiger_model,
    validate_layout,
)
from .particles import ParticleFilter
from .planners import Planner, PlannerConfig

CSV_HEADER = ("seed", "steps", "discounted", "cumulative", "reached_goal")
ERROR_MARKER = "error"
GRID_HEADER = (
    "rank", "c", "e", "episodes", "mean_discounted", "std_discounted",
    "mean_cumulative", "std_cumulative", "success_rate",
)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    name: str = "hallway"
    k1: int = 1
    k2: int = 1
    start: str = "standard"
    tiger: TigerParams = field(default_factory=TigerParams)

    def __post_init__(self):
        if self.name not in ("hallway", "tiger"):
            raise ValueError(f"unknown domain {self.name!r}")

    def build(self) -> PomdpModel:
        if self.name == "tiger":
            return tiger_model(self.tiger)
        return model_from_layout(build_layout(self.k1, self.k2), start=self.start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        d = dict(d)
        if "tiger" in d:
            d["tiger"] = TigerParams(**d["tiger"])
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    planner: str = "pomcpe"
    planner_config: PlannerConfig = field(default_factory=PlannerConfig)
    episodes: int = 100
    max_steps: int = 200
    base_seed: int = 0
    out: str | None = None
    workers: int = 1
    backend: str = "compiled"

    def __post_init__(self):
        if self.planner not in ("pomcp", "pomcpe"):
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def episode_seed(self, i: int) -> int:
        return self.base_seed + i

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["domain"] = self.domain.to_dict()
        d["planner_config"] = self.planner_config.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "domain" in d:
            d["domain"] = DomainSpec.from_dict(d["domain"])
        if "planner_config" in d:
            d["planner_config"] = PlannerConfig.from_dict(d["planner_config"])
        return cls(**d)


# --- results -----------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    steps: int
    discounted: float
    cumulative: float
    reached_goal: bool
    step_cap_reached: bool = False
    actions: tuple[int, ...] = ()
    observations: tuple[int, ...] = ()
    rewards: tuple[float, ...] = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class BatchStats:
    episodes: int
    completed: int
    errors: int
    mean_discounted: float
    std_discounted: float
    mean_cumulative: float
    std_cumulative: float
    success_rate: float
    planner: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        """True when no episode finished; the means are then NaN."""
        return self.completed == 0


def _mean(xs):
    return statistics.fmean(xs) if xs else math.nan


def _std(xs):
    return statistics.stdev(xs) if len(xs) > 1 else 0.0 if xs else math.nan


def summarize(rows: Sequence[EpisodeResult], planner: dict | None = None) -> BatchStats:
    ok = [r for r in rows if not r.failed]
    disc = [r.discounted for r in ok]
    cum = [r.cumulative for r in ok]
    return BatchStats(
        episodes=len(rows),
        completed=len(ok),
        errors=len(rows) - len(ok),
        mean_discounted=_mean(disc),
        std_discounted=_std(disc),
        mean_cumulative=_mean(cum),
        std_cumulative=_std(cum),
        success_rate=_mean([1.0 if r.reached_goal else 0.0 for r in ok]),
        planner=dict(planner or {}),
    )


# --- episodes ----------------------------------------------------------------

def run_episode(
    m: PomdpModel,
    planner: Planner,
    seed: int,
    max_steps: int = 200,
    policy: Callable[[int], int] | None = None,
) -> EpisodeResult:
    """Plan, act on the hidden true state, observe and re-root until the episode ends.

    ``policy`` maps the step index to an action and bypasses the planner (used
    for scripted baselines).  Hitting ``max_steps`` is a non-goal outcome
    flagged by ``step_cap_reached``.
    """
    env = stream(seed, 0)
    if policy is None:
        planner.reset(stream(seed, 1))
    s = m.sample_initial(env)
    actions, observations, rewards = [], [], []
    done = False
    for t in range(max_steps):
        if policy is None:
            rng = stream(seed, 2, t)
            a = planner.search(rng).action
        else:
            a = policy(t)
        step = m.step(s, a, env)
        actions.append(a)
        observations.append(step.observation)
        rewards.append(step.reward)
        done = step.done
        if policy is None and not done:
            planner.advance(a, step.observation, rng)
        if done:
            break
        s = step.next_state
    return EpisodeResult(
        seed=seed,
        steps=len(actions),
        discounted=discounted_return(rewards, m.discount),
        cumulative=math.fsum(rewards),
        reached_goal=bool(done and rewards[-1] > 0),
        step_cap_reached=not done,
        actions=tuple(actions),
        observations=tuple(observations),
        rewards=tuple(rewards),
    )


def _episode_job(args) -> EpisodeResult:
    cfg, model, i = args
    seed = cfg.episode_seed(i)
    try:
        planner = Planner(model, cfg.planner_config, cfg.planner, cfg.backend)
        return run_episode(model, planner, seed, cfg.max_steps)
    except Exception as exc:  # recorded, not raised: one bad episode must not sink a batch
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return EpisodeResult(seed, 0, math.nan, math.nan, False, error=detail)


def run_batch(cfg: RunConfig, model: PomdpModel | None = None) -> tuple[BatchStats, list[EpisodeResult]]:
    """Run ``cfg.episodes`` episodes; writes ``cfg.out`` when set."""
    model = model if model is not None else cfg.domain.build()
    jobs = [(cfg, model, i) for i in range(cfg.episodes)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_episode_job, jobs))
    else:
        rows = [_episode_job(j) for j in jobs]
    stats = summarize(rows, _planner_echo(cfg))
    if cfg.out:
        write_results(rows, stats, cfg.out, cfg)
    return stats, rows


def _planner_echo(cfg: RunConfig) -> dict:
    return {"planner": cfg.planner, **cfg.planner_config.to_dict()}


# --- persistence -------------------------------------------------------------

def summary_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".summary.json")


def _fmt(x: float) -> str:
    return repr(float(x))


def results_csv(rows: Sequence[EpisodeResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        if r.failed:
            w.writerow([r.seed, r.steps, "", "", ERROR_MARKER])
        else:
            w.writerow([r.seed, r.steps, _fmt(r.discounted), _fmt(r.cumulative), int(r.reached_goal)])
    return buf.getvalue()


def write_results(rows: Sequence[EpisodeResult], stats: BatchStats, path: str | Path, cfg: RunConfig | None = None) -> Path:
    """Per-episode CSV plus a ``<stem>.summary.json`` sidecar with the stats and the config."""
    path = Path(path)
    summary = {"stats": asdict(stats), "config": cfg.to_dict() if cfg else None}
    try:
        path.write_text(results_csv(rows))
        summary_path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path: str | Path) -> list[EpisodeResult]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for seed, steps, disc, cum, goal in reader:
            if goal == ERROR_MARKER:
                rows.append(EpisodeResult(int(seed), int(steps), math.nan, math.nan, False, error=ERROR_MARKER))
            else:
                rows.append(EpisodeResult(int(seed), int(steps), float(disc), float(cum), goal == "1"))
    return rows


# --- grid search -------------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    c: float
    e: float
    stats: BatchStats


def grid_search(
    cfg: RunConfig,
    c_grid: Sequence[float],
    e_grid: Sequence[float] = (0.0,),
    episodes_per_cell: int | None = None,
    model: PomdpModel | None = None,
) -> list[GridCell]:
    """One batch per ``(c, e)`` cell, ranked by mean discounted return.

    ``e_grid`` is ignored for POMCP.  When ``cfg.out`` is set the ranked table
    is written there.
    """
    if not c_grid or (cfg.planner == "pomcpe" and not e_grid):
        raise ValueError("grids must be non-empty")
    model = model if model is not None else cfg.domain.build()
    episodes = cfg.episodes if episodes_per_cell is None else episodes_per_cell
    es = list(e_grid) if cfg.planner == "pomcpe" else [0.0]
    cells = []
    for c in c_grid:
        for e in es:
            pc = replace(cfg.planner_config, exploration_c=float(c), entropy_e=float(e))
            stats, _ = run_batch(replace(cfg, planner_config=pc, episodes=episodes, out=None), model)
            cells.append(GridCell(float(c), float(e), stats))
    # NaN means (no completed episodes) sort last; ties keep grid order
    cells.sort(key=lambda g: -g.stats.mean_discounted if not math.isnan(g.stats.mean_discounted) else math.inf)
    if cfg.out:
        write_grid(cells, cfg.out)
    return cells


def write_grid(cells: Sequence[GridCell], path: str | Path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for rank, g in enumerate(cells, start=1):
        s = g.stats
        w.writerow([
            rank, _fmt(g.c), _fmt(g.e), s.completed, _fmt(s.mean_discounted), _fmt(s.std_discounted),
            _fmt(s.mean_cumulative), _fmt(s.std_cumulative), _fmt(s.success_rate),
        ])
    Path(path).write_text(buf.getvalue())
    return Path(path)


# --- self-check --------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def render(self) -> str:
        lines = [f"{'PASS' if c.ok else 'FAIL'}  {c.name}" + (f": {c.detail}" if c.detail else "") for c in self.checks]
        lines.append("all checks passed" if self.ok else f"{sum(not c.ok for c in self.checks)} check(s) failed")
        return "\n".join(lines)


def check_entropy_cache(filter_factory: Callable[[], ParticleFilter] = ParticleFilter, ops: int = 20_000, seed: int = 0) -> Check:
    """Incremental entropy against a from-scratch recompute after every insertion."""
    rng = np.random.default_rng(seed)
    f = filter_factory()
    worst = 0.0
    for s in rng.integers(0, 100, size=ops):
        f.add_particle(int(s))
        worst = max(worst, abs(f.entropy - f.full_entropy()))
    base = []
    for states, want in (([3], 0.0), ([3, 3], 0.0), ([3, 4], math.log(2))):
        g = filter_factory()
        for s in states:
            g.add_particle(s)
        base.append(abs(g.entropy - want))
    ok = worst <= 1e-6 and max(base) <= 1e-12
    return Check("entropy cache", ok, f"max drift {worst:.2e} over {ops} insertions; base-case error {max(base):.1e}")


def check_tiger() -> Check:
    m = tiger_model()
    uniform = np.array([0.5, 0.5])
    got = [expected_reward(uniform, a, m) for a in range(3)]
    b = exact_belief_update(uniform, 0, 0, m)
    b2 = exact_belief_update(b, 0, 1, m)
    ok = got == [-1.0, -45.0, -45.0] and np.allclose(b, [0.8, 0.2], atol=1e-12) and np.allclose(b2, uniform, atol=1e-12)
    return Check("tiger oracle", ok, f"rewards {got}, belief after hear-left {b.round(12).tolist()}")


def check_layout(layout, label: str) -> Check:
    try:
        info = validate_layout(layout)
    except LayoutInvalid as exc:
        return Check(f"layout {label}", False, f"LayoutInvalid: {exc}")
    return Check(f"layout {label}", True, ", ".join(f"{k}={v}" for k, v in info.items()))


def validate_command(
    layouts: dict[str, object] | None = None,
    filter_factory: Callable[[], ParticleFilter] = ParticleFilter,
) -> ValidationReport:
    """Entropy-cache property check, Tiger oracle values and layout validation.

    ``layouts`` (label to layout) replaces the default ``k1 = k2 in {0, 1, 2}``
    set; ``filter_factory`` lets tests inject a faulty filter.
    """
    if layouts is None:
        layouts = {f"k1=k2={k}": build_layout(k, k) for k in (0, 1, 2)}
    checks = [check_entropy_cache(filter_factory), check_tiger()]
    checks += [check_layout(layout, label) for label, layout in layouts.items()]
    return ValidationReport(tuple(checks))
