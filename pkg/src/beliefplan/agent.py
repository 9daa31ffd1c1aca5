"""Closed-loop agent: translate the goal, sample worlds, plan, act, observe.

Plans are executed step by step and dropped as soon as an observation
brings information the plan did not predict, which triggers a new planning
round.
"""
from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from beliefplan.alfred import START_LOCATION, alfred_domain
from beliefplan.backend import (BackendUnavailable, ChatBackend,
                                RecordingBackend, UsageLog)
from beliefplan.belief import (ContradictoryObservation, BeliefSet, WorldModel,
                               export_problem, init_from_scene, observe,
                               snapshot)
from beliefplan.goals import TranslationFailed, translate_goal
from beliefplan.grounding import (GoalUngroundable, GroundAction, GroundGoal,
                                  ground_actions, ground_goal, instantiate)
from beliefplan.household import HouseholdEnv
from beliefplan.pddl import DomainDef, GoalFormula, print_goal
from beliefplan.planner import (DEFAULT_BUDGET, PLANNERS, Plan,
                                PlanningFailure, SearchBudget)
from beliefplan.sampling import (SampleContext, SamplerConfig,
                                 dedupe_and_screen, sample)

log = logging.getLogger(__name__)


class Verdict(enum.Enum):
    NEEDS_RESAMPLE = "needs_resample"
    ALL_SATISFIED = "all_satisfied"
    NO_PLAN = "no_plan"


@dataclass(frozen=True)
class AgentConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    planner: str = "bffs"
    max_steps: int = 50
    # Resample and replan before every action, as in the bare loop, instead
    # of only when an observation brings new information.
    replan_every_step: bool = False
    budget: SearchBudget = DEFAULT_BUDGET
    plan_workers: int = 1

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.planner not in PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}")


Outcome = Plan | PlanningFailure


def select_action(outcomes: Sequence[tuple[frozenset, Outcome]],
                  cfg: AgentConfig | SamplerConfig, fallback_used: bool = False,
                  all_satisfied: bool = False) -> Plan | Verdict:
    """Shortest non-empty plan, ties broken by sample order.

    An empty plan means the sampled world already satisfies the goal while
    the environment says otherwise, so it is not a usable plan. Without a
    usable plan the caller is asked to resample once per round when
    fallback is enabled; otherwise the round has no plan.
    """
    sampler = cfg.sampler if isinstance(cfg, AgentConfig) else cfg
    best = None
    for i, (_, outcome) in enumerate(outcomes):
        if isinstance(outcome, Plan) and outcome.length > 0:
            if best is None or outcome.length < best.length:
                best = outcome
    if best is not None:
        return best
    if sampler.fallback_to_random and not fallback_used:
        every_empty = bool(outcomes) and all(
            isinstance(o, Plan) and o.length == 0 for _, o in outcomes)
        if all_satisfied or every_empty:
            return Verdict.ALL_SATISFIED
        return Verdict.NEEDS_RESAMPLE
    return Verdict.NO_PLAN


@dataclass
class StepRecord:
    index: int
    action: str
    feedback: str
    new_info: bool
    location: str
    exploratory: bool = False
    planning: dict | None = None


@dataclass
class EpisodeTrace:
    family: str = ""
    seed: int = 0
    instruction: str = ""
    goal: str = ""
    steps: list[StepRecord] = field(default_factory=list)
    success: bool = False
    failure_reason: str = ""
    planning_rounds: int = 0
    fallbacks: int = 0
    explorations: int = 0
    usage: UsageLog = field(default_factory=UsageLog)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def append(self, record: StepRecord) -> None:
        if record.index != len(self.steps):
            raise ValueError("step indices must be contiguous")
        self.steps.append(record)

    def token_totals(self) -> dict[str, dict[str, int]]:
        return self.usage.totals()

    @property
    def total_tokens(self) -> int:
        return self.usage.total_tokens

    def summary(self) -> dict:
        return {
            "type": "summary", "family": self.family, "seed": self.seed,
            "instruction": self.instruction, "goal": self.goal,
            "success": self.success, "steps": self.n_steps,
            "failure_reason": self.failure_reason,
            "planning_rounds": self.planning_rounds,
            "fallbacks": self.fallbacks, "explorations": self.explorations,
            "tokens": self.token_totals(), "total_tokens": self.total_tokens,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "step", **asdict(s)}, sort_keys=True)
                 for s in self.steps]
        lines.extend(json.dumps({"type": "llm_call", **asdict(c)},
                                sort_keys=True) for c in self.usage.calls)
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"


def _mentions(action: GroundAction, names: set[str]) -> bool:
    return any(a in names for a in action.args)


class _Episode:
    def __init__(self, env: HouseholdEnv, cfg: AgentConfig,
                 backend: ChatBackend | None, domain: DomainDef):
        self.env = env
        self.cfg = cfg
        self.domain = domain
        self.trace = EpisodeTrace(env.spec.task.family, env.spec.seed,
                                  env.instruction)
        usage = self.trace.usage
        self.goal_backend = RecordingBackend(backend, usage, "goal") \
            if backend is not None else None
        self.sample_backend = RecordingBackend(backend, usage, "sampler") \
            if backend is not None else None
        self.planner = PLANNERS[cfg.planner]
        self.last_visit: dict[str, int] = {}

    # -- planning -------------------------------------------------------
    def _round_actions(self, w: WorldModel, b: BeliefSet) -> list:
        """Ground once for every sample of a round.

        Samples differ only in which candidate atom of each slot holds, so
        grounding from the union of all candidates yields a superset of each
        sample's reachable actions; the surplus is simply never applicable.
        """
        init = set(w.known_true)
        for cands in b.slots.values():
            init |= cands
        objects = [(o.name, o.type_name) for o in w.objects.values()]
        return ground_actions(self.domain, objects, init)

    def _plan_one(self, w: WorldModel, b: BeliefSet, goal: GoalFormula,
                  ggoal: GroundGoal, actions: list,
                  assignment: frozenset) -> Outcome:
        problem = export_problem(w, b, assignment, goal)
        try:
            return self.planner(problem.init, actions, ggoal, self.cfg.budget)
        except PlanningFailure as exc:
            return exc

    def _draw(self, w, b, sampler: SamplerConfig, stream: int):
        ctx = SampleContext(round_index=self.trace.planning_rounds,
                            backend=self.sample_backend, env=self.env,
                            stream=stream)
        return sample(w, b, sampler, ctx)

    def _evaluate(self, w, b, goal, ggoal, assignments):
        usable, all_sat = dedupe_and_screen(assignments, w, ggoal)
        actions = self._round_actions(w, b) if usable else []

        def plan(a):
            return self._plan_one(w, b, goal, ggoal, actions, a)
        if self.cfg.plan_workers > 1 and len(usable) > 1:
            with ThreadPoolExecutor(self.cfg.plan_workers) as pool:
                plans = list(pool.map(plan, usable))
        else:
            plans = [plan(a) for a in usable]
        return list(zip(usable, plans)), all_sat

    def plan_round(self, w: WorldModel, b: BeliefSet, goal: GoalFormula
                   ) -> tuple[Plan | Verdict, dict]:
        self.trace.planning_rounds += 1
        ggoal = ground_goal(goal, self.domain,
                            [(o.name, o.type_name) for o in w.objects.values()])
        info: dict = {"round": self.trace.planning_rounds,
                      "snapshot": snapshot(w, b)}
        sampler = self.cfg.sampler
        try:
            assignments = self._draw(w, b, sampler, 0)
        except BackendUnavailable:
            if not sampler.fallback_to_random:
                raise
            assignments = []
        outcomes, all_sat = self._evaluate(w, b, goal, ggoal, assignments)
        info.update(_describe_round(outcomes, all_sat))
        choice = select_action(outcomes, self.cfg, False, all_sat)
        if choice in (Verdict.NEEDS_RESAMPLE, Verdict.ALL_SATISFIED):
            self.trace.fallbacks += 1
            info["fallback_reason"] = choice.value
            fallback = replace(sampler, strategy="random")
            outcomes, all_sat = self._evaluate(
                w, b, goal, ggoal, self._draw(w, b, fallback, 1))
            info["fallback"] = _describe_round(outcomes, all_sat)
            choice = select_action(outcomes, self.cfg, True, all_sat)
        info["selected"] = (None if isinstance(choice, Verdict)
                            else [str(a) for a in choice.steps])
        return choice, info

    def explore(self, w: WorldModel) -> GroundAction:
        """Goto the least recently visited receptacle."""
        here = w.location or START_LOCATION
        target = min((r for r in w.receptacles if r != here),
                     key=lambda r: (self.last_visit.get(r, -1), r))
        schema = next(a for a in self.domain.actions
                      if a.name == "gotoReceptacle")
        return instantiate(schema, {"?from": here, "?to": target})

    # -- loop -------------------------------------------------------------
    def run(self) -> EpisodeTrace:
        trace = self.trace
        try:
            self._run()
        except TranslationFailed as exc:
            trace.failure_reason = f"translation failed: {exc}"
        except ContradictoryObservation as exc:
            trace.failure_reason = f"contradictory observation: {exc}"
        except GoalUngroundable as exc:
            trace.failure_reason = f"goal ungroundable: {exc}"
        except BackendUnavailable as exc:
            trace.failure_reason = f"backend unavailable: {exc}"
        except Exception as exc:  # the episode boundary swallows everything
            log.exception("episode aborted")
            trace.failure_reason = f"{type(exc).__name__}: {exc}"
        return trace

    def _run(self) -> None:
        env, cfg, trace = self.env, self.cfg, self.trace
        obs, task = env.reset()
        if self.goal_backend is None:
            raise BackendUnavailable("no language backend configured")
        goal = translate_goal(task, self.domain, self.goal_backend)
        trace.goal = print_goal(goal)
        w, b = init_from_scene(goal.binder_types(), obs.receptacles)
        queue: list[GroundAction] = []
        pending_info: dict | None = None
        done = False
        while not done and len(trace.steps) < cfg.max_steps:
            exploratory = False
            if not queue or cfg.replan_every_step:
                choice, pending_info = self.plan_round(w, b, goal)
                if isinstance(choice, Plan):
                    queue = list(choice.steps)
                elif not cfg.sampler.fallback_to_random:
                    trace.failure_reason = "no plan found"
                    return
                else:
                    queue = [self.explore(w)]
                    exploratory = True
                    trace.explorations += 1
            action = queue.pop(0)
            if _mentions(action, set(w.hypotheticals())):
                # A stale plan reached a placeholder object; look elsewhere.
                action = self.explore(w)
                queue = []
                exploratory = True
                trace.explorations += 1
            obs, done = env.step(action)
            w, b, new_info = observe(w, b, action, obs)
            self.last_visit[obs.location] = len(trace.steps)
            trace.append(StepRecord(len(trace.steps), str(action),
                                    obs.feedback, new_info, obs.location,
                                    exploratory, pending_info))
            pending_info = None
            if new_info:
                queue = []
        trace.success = done
        if not done:
            trace.failure_reason = "step budget exhausted"


def _describe_round(outcomes, all_sat: bool) -> dict:
    return {
        "samples": [sorted(str(a) for a in assignment)
                    for assignment, _ in outcomes],
        "outcomes": [outcome.length if isinstance(outcome, Plan)
                     else type(outcome).__name__ for _, outcome in outcomes],
        "all_satisfied": all_sat,
    }


def run_episode(env: HouseholdEnv, cfg: AgentConfig,
                backend: ChatBackend | None,
                domain: DomainDef | None = None) -> EpisodeTrace:
    """Run one episode to success, step budget, or failure.

    Errors end the episode as a recorded failure; nothing propagates.
    """
    return _Episode(env, cfg, backend, domain or alfred_domain()).run()
