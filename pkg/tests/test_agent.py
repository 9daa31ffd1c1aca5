import json

import pytest

from beliefplan.agent import (AgentConfig, EpisodeTrace, StepRecord, Verdict,
                              run_episode, select_action)
from beliefplan.alfred import alfred_domain
from beliefplan.backend import ScriptedBackend
from beliefplan.goals import household_fixtures
from beliefplan.grounding import GroundAction, ground_actions, ground_goal
from beliefplan.harness import scripted_backend
from beliefplan.household import (HouseholdEnv, ObjectSpec, ReceptacleSpec,
                                  ScenarioSpec, TaskSpec, generate_scenario,
                                  instruction_for, task_goal)
from beliefplan.planner import (BudgetExhausted, Plan, Unsolvable,
                                plan_optimal)
from beliefplan.sampling import SamplerConfig

from fixtures import mug_kitchen, translation_backend

DOMAIN = alfred_domain()


def plan_of(n):
    step = GroundAction("noop", (), frozenset(), frozenset(), frozenset(),
                        frozenset())
    return Plan(tuple([step] * n))


def cfg(strategy="random", n=3, fallback=True, **kwargs):
    return AgentConfig(SamplerConfig(strategy, n, 0, fallback), **kwargs)


def check_heads(trace: EpisodeTrace) -> None:
    """Every non-exploratory action is the head of the selected plan."""
    queue: list[str] = []
    for step in trace.steps:
        if step.planning and step.planning.get("selected"):
            queue = list(step.planning["selected"])
        if step.exploratory:
            queue = []
            continue
        assert queue and step.action == queue.pop(0), step
        if step.new_info:
            queue = []


# -- select_action ----------------------------------------------------------

def test_shortest_plan_wins():
    outcomes = [(frozenset(), plan_of(6)), (frozenset(), plan_of(4)),
                (frozenset(), plan_of(9))]
    assert select_action(outcomes, cfg()) is outcomes[1][1]


def test_ties_go_to_the_first_sample():
    a, b = plan_of(3), plan_of(3)
    assert select_action([(frozenset(), a), (frozenset(), b)], cfg()) is a


def test_unsolvable_everywhere_asks_for_one_resample():
    outcomes = [(frozenset(), Unsolvable("x"))] * 3
    assert select_action(outcomes, cfg()) is Verdict.NEEDS_RESAMPLE
    assert select_action(outcomes, cfg(), fallback_used=True) is Verdict.NO_PLAN
    assert select_action(outcomes, cfg(fallback=False)) is Verdict.NO_PLAN


def test_budget_exhaustion_counts_as_no_plan():
    outcomes = [(frozenset(), BudgetExhausted(10, 1.0)), (frozenset(), plan_of(5))]
    assert select_action(outcomes, cfg()).length == 5


def test_empty_plans_mean_all_satisfied():
    outcomes = [(frozenset(), plan_of(0))] * 2
    assert select_action(outcomes, cfg()) is Verdict.ALL_SATISFIED
    assert select_action([], cfg(), all_satisfied=True) is Verdict.ALL_SATISFIED
    assert select_action(outcomes, cfg(fallback=False)) is Verdict.NO_PLAN


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(max_steps=0)
    with pytest.raises(ValueError):
        cfg(planner="astar")


def test_trace_indices_are_contiguous():
    trace = EpisodeTrace()
    trace.append(StepRecord(0, "a", "", False, "x"))
    with pytest.raises(ValueError):
        trace.append(StepRecord(2, "b", "", False, "x"))


# -- episodes -----------------------------------------------------------------

def apple_kitchen() -> ScenarioSpec:
    recs = (ReceptacleSpec("countertop-1", "countertop", False),
            ReceptacleSpec("drawer-1", "drawer", True),
            ReceptacleSpec("shelf-1", "shelf", False))
    objs = (ObjectSpec("apple-1", "apple", "countertop-1"),
            ObjectSpec("mug-1", "mug", "shelf-1"))
    return ScenarioSpec(0, recs, objs, TaskSpec(
        "put", "apple", "drawer", instruction_for("put", "apple", "drawer")))


def test_target_in_first_visited_receptacle_needs_at_most_one_replan():
    backend = ScriptedBackend(household_fixtures())
    backend.register("Known facts:*", "countertop-1")
    trace = run_episode(HouseholdEnv(apple_kitchen()), cfg("llm"), backend)
    assert trace.success, trace.failure_reason
    assert trace.steps[0].action == "(gotoReceptacle start-loc countertop-1)"
    assert trace.planning_rounds <= 2
    check_heads(trace)


def test_step_budget_cuts_the_episode():
    trace = run_episode(HouseholdEnv(apple_kitchen()), cfg(max_steps=1),
                        scripted_backend())
    assert not trace.success and trace.n_steps == 1
    assert trace.failure_reason == "step budget exhausted"


@pytest.mark.parametrize("family,seed", [("put", 0), ("clean", 1),
                                         ("examine", 2), ("puttwo", 3)])
def test_oracle_agent_walks_the_optimal_plan(family, seed):
    spec = generate_scenario(family, seed)
    env = HouseholdEnv(spec, oracle_enabled=True)
    trace = run_episode(env, cfg("oracle", planner="optimal"),
                        scripted_backend())
    assert trace.success, trace.failure_reason
    fresh = HouseholdEnv(spec, oracle_enabled=True)
    objs = spec.object_declarations()
    init = fresh.oracle_state()
    best = plan_optimal(init, ground_actions(DOMAIN, objs, init),
                        ground_goal(task_goal(spec.task), DOMAIN, objs))
    assert trace.n_steps == best.length
    assert trace.fallbacks == 0 and trace.explorations == 0
    check_heads(trace)


@pytest.mark.parametrize("seed", range(6))
def test_random_agent_follows_selected_plans(seed):
    spec = generate_scenario(("put", "heat", "cool")[seed % 3], seed)
    trace = run_episode(HouseholdEnv(spec), cfg(), scripted_backend())
    assert trace.success, trace.failure_reason
    check_heads(trace)
    # Replanning happens only after new information.
    for prev, step in zip(trace.steps, trace.steps[1:]):
        if step.planning is not None:
            assert prev.new_info or prev.exploratory or step.exploratory


def test_strict_mode_replans_every_step():
    trace = run_episode(HouseholdEnv(apple_kitchen()),
                        cfg(replan_every_step=True), scripted_backend())
    assert trace.success
    assert trace.planning_rounds == trace.n_steps


def test_fallback_runs_at_most_once_per_round():
    trace = run_episode(HouseholdEnv(mug_kitchen()), cfg(max_steps=6),
                        translation_backend())
    assert not trace.success
    rounds = [s.planning for s in trace.steps if s.planning]
    assert len(rounds) == trace.planning_rounds
    # Each round resampled exactly once, and the resample did not recurse.
    assert trace.fallbacks == sum("fallback" in r for r in rounds) == len(rounds)
    assert all("fallback" not in r["fallback"] for r in rounds)


def test_unsolvable_goal_without_fallback_fails_the_episode():
    trace = run_episode(HouseholdEnv(mug_kitchen()), cfg(fallback=False),
                        translation_backend())
    assert not trace.success and trace.failure_reason == "no plan found"
    assert trace.n_steps == 0


def test_unsolvable_goal_with_fallback_explores_until_budget():
    trace = run_episode(HouseholdEnv(mug_kitchen()), cfg(max_steps=5),
                        translation_backend())
    assert trace.failure_reason == "step budget exhausted"
    assert trace.explorations == 5
    assert all(s.exploratory and s.action.startswith("(gotoReceptacle")
               for s in trace.steps)


def test_translation_failure_is_recorded():
    backend = ScriptedBackend([("Your task is to: *", "no idea"),
                               ("That goal is invalid*", "still no idea")])
    trace = run_episode(HouseholdEnv(apple_kitchen()), cfg(), backend)
    assert not trace.success
    assert trace.failure_reason.startswith("translation failed")


def test_missing_backend_is_recorded():
    trace = run_episode(HouseholdEnv(apple_kitchen()), cfg(), None)
    assert trace.failure_reason.startswith("backend unavailable")


def test_token_totals_equal_logged_calls_and_jsonl():
    spec = generate_scenario("puttwo", 5)
    trace = run_episode(HouseholdEnv(spec), cfg("llm"), scripted_backend())
    calls = trace.usage.calls
    assert calls and {c.role for c in calls} == {"goal", "sampler"}
    assert trace.total_tokens == sum(c.prompt_tokens + c.completion_tokens
                                     for c in calls)
    records = [json.loads(line) for line in trace.to_jsonl().splitlines()]
    assert [r["type"] for r in records] == (
        ["step"] * trace.n_steps + ["llm_call"] * len(calls) + ["summary"])
    logged = sum(r["prompt_tokens"] + r["completion_tokens"]
                 for r in records if r["type"] == "llm_call")
    assert records[-1]["total_tokens"] == logged == trace.total_tokens
    assert [r["index"] for r in records if r["type"] == "step"] == \
        list(range(trace.n_steps))


def test_parallel_planning_matches_sequential():
    spec = generate_scenario("clean", 7)
    one = run_episode(HouseholdEnv(spec), cfg(), scripted_backend())
    many = run_episode(HouseholdEnv(spec), cfg(plan_workers=3),
                       scripted_backend())
    assert [s.action for s in one.steps] == [s.action for s in many.steps]
