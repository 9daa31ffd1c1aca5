"""Batch episode runs, per-family metrics, and report files."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import zlib
from concurrent.futures import (Executor, ProcessPoolExecutor,
                                ThreadPoolExecutor, as_completed)
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from beliefplan.agent import AgentConfig, run_episode
from beliefplan.backend import (ChatBackend, ChatRequest, Fixture,
                                HTTPBackend, ScriptedBackend)
from beliefplan.goals import household_fixtures
from beliefplan.household import FAMILIES, HouseholdEnv, generate_scenario

log = logging.getLogger(__name__)

COLUMNS = FAMILIES + ("overall",)
BACKENDS = ("scripted", "http")
LENGTH_NOTE = ("mean_length averages successful episodes only; "
               "mean_length_all averages every episode")


# -- backends -----------------------------------------------------------------

_OPTIONS_LINE = "Options: "


def _random_slot_reply(request: ChatRequest) -> str:
    """Pick one listed option by hashing the prompt: stable but spread out."""
    prompt = request.last_user()
    line = next((ln for ln in prompt.splitlines()
                 if ln.startswith(_OPTIONS_LINE)), "")
    options = [o.strip() for o in line[len(_OPTIONS_LINE):].split(",")
               if o.strip()]
    if not options:
        return "I do not know."
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return options[int.from_bytes(digest[:8], "big") % len(options)]


def scripted_backend() -> ScriptedBackend:
    """Exact goals for templated tasks, and hash-random answers to location
    questions."""
    return ScriptedBackend(household_fixtures()
                           + [Fixture("Known facts:*", _random_slot_reply)])


def make_backend(kind: str) -> ChatBackend:
    if kind == "scripted":
        return scripted_backend()
    if kind == "http":
        return HTTPBackend()
    raise ValueError(f"unknown backend {kind!r}")


# -- results ------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeResult:
    family: str
    index: int
    scenario_seed: int
    success: bool
    steps: int
    prompt_tokens: int = 0
    completion_tokens: int = 0
    fallbacks: int = 0
    explorations: int = 0
    failure_reason: str = ""

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class FamilyStats:
    episodes: int
    successes: int
    success_rate: float
    mean_length: float | None
    mean_length_all: float | None
    tokens: int

    @classmethod
    def of(cls, results: Sequence[EpisodeResult]) -> FamilyStats:
        wins = [r for r in results if r.success]
        return cls(
            len(results), len(wins),
            len(wins) / len(results) if results else 0.0,
            sum(r.steps for r in wins) / len(wins) if wins else None,
            sum(r.steps for r in results) / len(results) if results else None,
            sum(r.tokens for r in results))


def _fmt(x: float | None, digits: int = 2) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


@dataclass
class SuiteReport:
    label: str
    config: dict
    results: list[EpisodeResult] = field(default_factory=list)
    interrupted: bool = False

    def stats(self) -> dict[str, FamilyStats]:
        out = {}
        for fam in FAMILIES:
            out[fam] = FamilyStats.of([r for r in self.results
                                       if r.family == fam])
        out["overall"] = FamilyStats.of(self.results)
        return out

    def rows(self) -> list[tuple[str, list[str]]]:
        """Metric rows shared by the text and CSV views."""
        stats = self.stats()
        return [
            ("success_rate", [_fmt(stats[c].success_rate) for c in COLUMNS]),
            ("mean_length", [_fmt(stats[c].mean_length) for c in COLUMNS]),
            ("mean_length_all", [_fmt(stats[c].mean_length_all)
                                 for c in COLUMNS]),
            ("episodes", [str(stats[c].episodes) for c in COLUMNS]),
            ("tokens", [str(stats[c].tokens) for c in COLUMNS]),
        ]

    def to_text(self) -> str:
        head = f"{self.label}  ({LENGTH_NOTE}; tokens are chars/4 " \
               "estimates under the scripted backend)"
        width = max(len(c) for c in COLUMNS) + 2
        lines = [head, "metric".ljust(18) + "".join(c.rjust(width)
                                                   for c in COLUMNS)]
        for name, cells in self.rows():
            lines.append(name.ljust(18) + "".join(v.rjust(width)
                                                  for v in cells))
        if self.interrupted:
            lines.append("(interrupted: partial results)")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", *COLUMNS])
        for name, cells in self.rows():
            writer.writerow([name, *cells])
        return buf.getvalue()

    def to_dict(self) -> dict:
        stats = self.stats()
        return {
            "label": self.label, "config": self.config,
            "interrupted": self.interrupted, "length_convention": LENGTH_NOTE,
            "columns": {c: {k: (round(v, 2) if isinstance(v, float) else v)
                            for k, v in asdict(stats[c]).items()}
                        for c in COLUMNS},
            "episodes": [asdict(r) for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out: str | Path, stem: str = "report") -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.txt").write_text(self.to_text(), encoding="utf-8")
        (out / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / f"{stem}.json").write_text(self.to_json(), encoding="utf-8")


# -- running ------------------------------------------------------------------

def episode_seeds(family: str, index: int, seed: int,
                  sampler_seed: int) -> tuple[int, int]:
    """(scenario seed, sampler seed) for one episode of a suite."""
    scenario_seed = seed + index
    sampler = zlib.crc32(f"{family}:{scenario_seed}:{sampler_seed}".encode())
    return scenario_seed, sampler


def run_one(family: str, index: int, seed: int, cfg: AgentConfig,
            backend: ChatBackend | str,
            trace_dir: str | None = None) -> EpisodeResult:
    scenario_seed, sampler_seed = episode_seeds(family, index, seed,
                                                cfg.sampler.seed)
    cfg = replace(cfg, sampler=replace(cfg.sampler, seed=sampler_seed))
    if isinstance(backend, str):
        backend = make_backend(backend)
    env = HouseholdEnv(generate_scenario(family, scenario_seed),
                       oracle_enabled=cfg.sampler.strategy == "oracle")
    trace = run_episode(env, cfg, backend)
    if trace_dir is not None:
        path = Path(trace_dir) / f"{family}-{scenario_seed:05d}.jsonl"
        path.write_text(trace.to_jsonl(), encoding="utf-8")
    totals = trace.token_totals()
    return EpisodeResult(
        family, index, scenario_seed, trace.success, trace.n_steps,
        sum(t["prompt_tokens"] for t in totals.values()),
        sum(t["completion_tokens"] for t in totals.values()),
        trace.fallbacks, trace.explorations, trace.failure_reason)


def _config_dict(cfg: AgentConfig, families, episodes, seed, backend) -> dict:
    return {
        "sampler": cfg.sampler.strategy, "n_samples": cfg.sampler.n_samples,
        "fallback": cfg.sampler.fallback_to_random, "planner": cfg.planner,
        "max_steps": cfg.max_steps, "replan_every_step": cfg.replan_every_step,
        "families": list(families), "episodes_per_family": episodes,
        "seed": seed,
        "backend": backend if isinstance(backend, str) else type(backend).__name__,
    }


def run_suite(families: Iterable[str], episodes_per_family: int,
              cfg: AgentConfig, backend: ChatBackend | str = "scripted",
              workers: int = 1, seed: int = 0, label: str = "agent",
              out: str | Path | None = None,
              trace_dir: str | Path | None = None) -> SuiteReport:
    """Run ``episodes_per_family`` seeded episodes for every family.

    A backend given by name is rebuilt inside each worker process; a
    backend object is shared by worker threads. On interrupt the finished
    episodes are still reported (and written when ``out`` is set).
    """
    families = list(families)
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown task family {fam!r}")
    if episodes_per_family < 0:
        raise ValueError("episodes_per_family must be non-negative")
    report = SuiteReport(label, _config_dict(cfg, families,
                                             episodes_per_family, seed,
                                             backend))
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        trace_dir = str(trace_dir)
    jobs = [(fam, i) for fam in families for i in range(episodes_per_family)]
    try:
        if workers <= 1:
            for fam, i in jobs:
                report.results.append(run_one(fam, i, seed, cfg, backend,
                                              trace_dir))
        else:
            pool_cls: type[Executor] = (ProcessPoolExecutor
                                        if isinstance(backend, str)
                                        else ThreadPoolExecutor)
            with pool_cls(workers) as pool:
                futures = [pool.submit(run_one, fam, i, seed, cfg, backend,
                                       trace_dir) for fam, i in jobs]
                try:
                    for fut in as_completed(futures):
                        report.results.append(fut.result())
                except KeyboardInterrupt:
                    for fut in futures:
                        fut.cancel()
                    raise
    except KeyboardInterrupt:
        report.interrupted = True
        log.warning("interrupted after %d of %d episodes",
                    len(report.results), len(jobs))
    order = {job: k for k, job in enumerate(jobs)}
    report.results.sort(key=lambda r: order[(r.family, r.index)])
    if out is not None:
        report.write(out)
    return report


def ablation_label(n: int, fallback: bool) -> str:
    return f"agent (n={n})" + ("" if fallback else " - fallback")


@dataclass
class AblationReport:
    rows: list[SuiteReport]

    def to_text(self) -> str:
        width = max(len(c) for c in COLUMNS) + 2
        name_w = max([len(r.label) for r in self.rows] + [10]) + 2
        lines = [f"success rate by family ({LENGTH_NOTE})",
                 "".ljust(name_w) + "".join(c.rjust(width) for c in COLUMNS)]
        for row in self.rows:
            stats = row.stats()
            lines.append(row.label.ljust(name_w) + "".join(
                _fmt(stats[c].success_rate).rjust(width) for c in COLUMNS))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", *COLUMNS])
        for row in self.rows:
            stats = row.stats()
            writer.writerow([row.label, *(_fmt(stats[c].success_rate)
                                          for c in COLUMNS)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([r.to_dict() for r in self.rows], indent=2,
                          sort_keys=True)

    def write(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.txt").write_text(self.to_text(), encoding="utf-8")
        (out / "ablation.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "ablation.json").write_text(self.to_json(), encoding="utf-8")


def ablate(n_values: Sequence[int], fallback_flags: Sequence[bool],
           families: Iterable[str], episodes_per_family: int,
           cfg: AgentConfig, backend: ChatBackend | str = "scripted",
           workers: int = 1, seed: int = 0,
           out: str | Path | None = None) -> AblationReport:
    """One suite per (n, fallback) pair, all on the same scenario seeds."""
    families = list(families)
    rows = []
    for n in n_values:
        for fb in fallback_flags:
            row_cfg = replace(cfg, sampler=replace(
                cfg.sampler, n_samples=n, fallback_to_random=fb))
            rows.append(run_suite(families, episodes_per_family, row_cfg,
                                  backend, workers, seed,
                                  label=ablation_label(n, fb)))
    report = AblationReport(rows)
    if out is not None:
        report.write(out)
    return report
