"""Scripted translations shared by the goal and acceptance tests."""
from __future__ import annotations

from beliefplan.backend import ScriptedBackend
from beliefplan.goals import TASK_PREFIX, _few_shot_pairs
from beliefplan.household import ObjectSpec, ReceptacleSpec, ScenarioSpec, TaskSpec

PEPPERSHAKER = """(:goal
    (exists (?t - peppershaker ?r - drawer)
        (inReceptacle ?t ?r)
))"""

CLEAN_MUG = """(:goal
    (exists (?t - mug ?r - coffeemachine)
        (and (inReceptacle ?t ?r)
             (isClean ?t)
)))"""

TWO_CD = """(:goal
    (exists (?t1 - cd ?t2 - cd ?r - safe)
        (and (inReceptacle ?t1 ?r)
             (inReceptacle ?t2 ?r)
             (not (= ?t1 ?t2))
)))"""

MUG_RECEPTACLE = """(:goal
    (exists (?m - mug ?c - coffeemachine)
        (and (isReceptacle ?m)
             (isHot ?m)
             (inReceptacle ?m ?c)
)))"""

GENERATED = {
    "put some peppershaker on drawer.": PEPPERSHAKER,
    "put a clean mug in coffeemachine.": CLEAN_MUG,
    "put two cd in safe.": TWO_CD,
}
MUG_TASK = "heat some mug and put it in coffeemachine."


def few_shot_tasks() -> dict[str, str]:
    return {task[len(TASK_PREFIX):]: goal for task, goal in _few_shot_pairs()}


def translation_backend() -> ScriptedBackend:
    """Exact-match fixtures: few-shot tasks, generated goals, the mug case."""
    table = {**few_shot_tasks(), **GENERATED, MUG_TASK: MUG_RECEPTACLE}
    return ScriptedBackend([(TASK_PREFIX + task, goal)
                            for task, goal in table.items()])


def mug_kitchen() -> ScenarioSpec:
    """A kitchen where the mug task is physically achievable."""
    recs = (ReceptacleSpec("countertop-1", "countertop", False),
            ReceptacleSpec("coffeemachine-1", "coffeemachine", False),
            ReceptacleSpec("microwave-1", "microwave", True, "isMicrowave"),
            ReceptacleSpec("cabinet-1", "cabinet", True))
    objs = (ObjectSpec("mug-1", "mug", "countertop-1"),
            ObjectSpec("apple-1", "apple", "cabinet-1"))
    return ScenarioSpec(0, recs, objs,
                        TaskSpec("heat", "mug", "coffeemachine", MUG_TASK))
