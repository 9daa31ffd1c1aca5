"""Forward state-space planners over ground STRIPS problems.

``plan_optimal`` is plain breadth-first search and returns shortest plans.
``plan_bffs`` is a best-first search ordered by (novelty, goal count,
insertion order) with width-2 novelty tables; it never prunes, so it is
complete within its budget but its plans need not be shortest.

Both compile states to integer bitmasks internally.
"""
from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from beliefplan.grounding import (GroundAction, GroundGoal, applicable, apply,
                                  goal_satisfied)
from beliefplan.pddl import Atom


class PlanningFailure(Exception):
    """Base for search outcomes that carry no plan."""

    def __init__(self, message: str, expanded: int = 0):
        super().__init__(message)
        self.expanded = expanded


class Unsolvable(PlanningFailure):
    pass


class BudgetExhausted(PlanningFailure):
    pass


@dataclass(frozen=True)
class SearchBudget:
    max_expanded_nodes: int = 100_000
    max_wall_time: float = 5.0

    def __post_init__(self):
        if self.max_expanded_nodes <= 0 or self.max_wall_time <= 0:
            raise ValueError("search budget must be positive")


DEFAULT_BUDGET = SearchBudget()


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...] = ()
    expanded: int = 0

    @property
    def length(self) -> int:
        return len(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __str__(self) -> str:
        return "\n".join(str(a) for a in self.steps)


@dataclass(frozen=True)
class PlanCheck:
    ok: bool
    failed_step: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_plan(init: frozenset[Atom], plan: Plan | Sequence[GroundAction],
                  goal: GroundGoal) -> PlanCheck:
    state = frozenset(init)
    for i, action in enumerate(plan):
        if not applicable(state, action):
            return PlanCheck(False, i, f"{action} not applicable")
        state = apply(state, action)
    if not goal_satisfied(state, goal):
        return PlanCheck(False, None, "final state does not satisfy the goal")
    return PlanCheck(True)


class _Compiled:
    """Bitmask encoding of a ground problem."""

    def __init__(self, init: Iterable[Atom], actions: Sequence[GroundAction],
                 goal: GroundGoal):
        index: dict[Atom, int] = {}

        def mask(atoms: Iterable[Atom]) -> int:
            m = 0
            for atom in atoms:
                i = index.get(atom)
                if i is None:
                    i = index[atom] = len(index)
                m |= 1 << i
            return m

        self.init = mask(sorted(init))
        self.actions = list(actions)
        self.pre = []
        self.neg = []
        self.add = []
        self.keep = []
        for a in self.actions:
            self.pre.append(mask(a.pre_pos))
            self.neg.append(mask(a.pre_neg))
            self.add.append(mask(a.add))
            self.keep.append(~mask(a.delete))
        self.goals = [(mask(c.pos), mask(c.neg)) for c in goal.disjuncts]
        self.n_atoms = len(index)
        # Bucket each action under its rarest positive precondition so
        # successor generation only looks at actions keyed by true atoms.
        usage = [0] * self.n_atoms
        for pre in self.pre:
            for i in _bits(pre):
                usage[i] += 1
        self.buckets: dict[int, list[int]] = {}
        self.unkeyed: list[int] = []
        for ai, pre in enumerate(self.pre):
            bits = list(_bits(pre))
            if not bits:
                self.unkeyed.append(ai)
            else:
                key = min(bits, key=lambda i: (usage[i], i))
                self.buckets.setdefault(key, []).append(ai)
        self.key_mask = 0
        for key in self.buckets:
            self.key_mask |= 1 << key

    def is_goal(self, s: int) -> bool:
        for pos, neg in self.goals:
            if s & pos == pos and not s & neg:
                return True
        return False

    def goal_count(self, s: int) -> int:
        return min(((pos & ~s).bit_count() + (neg & s).bit_count()
                    for pos, neg in self.goals), default=0)

    def successors(self, s: int):
        candidates = list(self.unkeyed)
        buckets = self.buckets
        for i in _bits(s & self.key_mask):
            candidates.extend(buckets[i])
        candidates.sort()
        pre, neg, add, keep = self.pre, self.neg, self.add, self.keep
        for ai in candidates:
            p = pre[ai]
            if s & p == p and not s & neg[ai]:
                yield ai, (s & keep[ai]) | add[ai]


def _bits(m: int):
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def _extract(parents: dict, state: int, actions: list) -> tuple:
    steps = []
    while True:
        parent, ai = parents[state]
        if parent is None:
            break
        steps.append(actions[ai])
        state = parent
    steps.reverse()
    return tuple(steps)


def plan_optimal(init: Iterable[Atom], actions: Sequence[GroundAction],
                 goal: GroundGoal, budget: SearchBudget = DEFAULT_BUDGET) -> Plan:
    """Breadth-first search with duplicate detection; returns a shortest plan.

    Raises ``Unsolvable`` once the reachable space is exhausted and
    ``BudgetExhausted`` when the budget runs out first.
    """
    task = _Compiled(init, actions, goal)
    root = task.init
    if task.is_goal(root):
        return Plan((), 0)
    deadline = time.perf_counter() + budget.max_wall_time
    parents: dict[int, tuple] = {root: (None, -1)}
    queue = deque([root])
    expanded = 0
    while queue:
        if expanded >= budget.max_expanded_nodes or (
                time.perf_counter() > deadline):
            raise BudgetExhausted(f"budget exhausted after {expanded} "
                                  "expansions", expanded)
        s = queue.popleft()
        expanded += 1
        for ai, child in task.successors(s):
            if child in parents:
                continue
            parents[child] = (s, ai)
            # Goal test on generation keeps BFS optimal under unit costs.
            if task.is_goal(child):
                return Plan(_extract(parents, child, task.actions), expanded)
            queue.append(child)
    raise Unsolvable(f"no plan after exhausting {expanded} states", expanded)


class _Novelty:
    """Atom and atom-pair tables for width <= 2 novelty."""

    def __init__(self, n_atoms: int):
        self.n = n_atoms
        self.atoms = 0
        self.pairs: set[int] = set()

    def evaluate(self, s: int, parent: int | None) -> int:
        """Record ``s`` and return 1, 2 or 3.

        Every pair inside the parent was recorded when the parent was
        generated, so only pairs touching an atom new relative to the parent
        can be novel.
        """
        novelty = 3
        if s & ~self.atoms:
            novelty = 1
            self.atoms |= s
        members = list(_bits(s))
        fresh = members if parent is None else list(_bits(s & ~parent))
        n = self.n
        pairs = self.pairs
        for a in fresh:
            for b in members:
                if a == b:
                    continue
                key = a * n + b if a < b else b * n + a
                if key not in pairs:
                    pairs.add(key)
                    if novelty == 3:
                        novelty = 2
        return novelty


def plan_bffs(init: Iterable[Atom], actions: Sequence[GroundAction],
              goal: GroundGoal, budget: SearchBudget = DEFAULT_BUDGET) -> Plan:
    """Best-first search ordered by (novelty, goal count, insertion order)."""
    task = _Compiled(init, actions, goal)
    root = task.init
    if task.is_goal(root):
        return Plan((), 0)
    deadline = time.perf_counter() + budget.max_wall_time
    novelty = _Novelty(task.n_atoms)
    parents: dict[int, tuple] = {root: (None, -1)}
    counter = 0
    heap = [(novelty.evaluate(root, None), task.goal_count(root), counter, root)]
    expanded = 0
    while heap:
        if expanded >= budget.max_expanded_nodes or (
                time.perf_counter() > deadline):
            raise BudgetExhausted(f"budget exhausted after {expanded} "
                                  "expansions", expanded)
        _, _, _, s = heapq.heappop(heap)
        expanded += 1
        for ai, child in task.successors(s):
            if child in parents:
                continue
            parents[child] = (s, ai)
            if task.is_goal(child):
                return Plan(_extract(parents, child, task.actions), expanded)
            counter += 1
            heapq.heappush(heap, (novelty.evaluate(child, s),
                                  task.goal_count(child), counter, child))
    raise Unsolvable(f"no plan after exhausting {expanded} states", expanded)


PLANNERS = {"optimal": plan_optimal, "bffs": plan_bffs}
