"""Ground action schemas and existential goals over a problem's objects."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

from beliefplan.pddl import (ActionSchema, Atom, DomainDef, GoalFormula,
                             Literal, ProblemDef, ROOT_TYPE, is_variable)

State = frozenset  # frozenset[Atom]


class GroundingError(Exception):
    pass


class GoalUngroundable(GroundingError):
    """No binding of the goal's variables exists, usually because no object
    of a required type has been declared."""

    def __init__(self, message: str, missing_types: tuple[str, ...] = ()):
        super().__init__(message)
        self.missing_types = missing_types


class InapplicableAction(GroundingError):
    pass


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset[Atom]
    pre_neg: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]
    cost: int = 1

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return self.name, self.args


class Conjunction(NamedTuple):
    pos: frozenset[Atom]
    neg: frozenset[Atom] = frozenset()


@dataclass(frozen=True)
class GroundGoal:
    """Disjunction over the existential bindings of a goal formula.

    ``bindings[i]`` is the variable assignment that produced
    ``disjuncts[i]``.
    """
    disjuncts: tuple[Conjunction, ...]
    bindings: tuple[tuple[tuple[str, str], ...], ...] = ()

    def atoms(self) -> set[Atom]:
        out: set[Atom] = set()
        for conj in self.disjuncts:
            out |= conj.pos | conj.neg
        return out


class GroundProblem(NamedTuple):
    init: frozenset[Atom]
    actions: tuple[GroundAction, ...]
    goal: GroundGoal


def applicable(state: frozenset[Atom], action: GroundAction) -> bool:
    return action.pre_pos <= state and not (action.pre_neg & state)


def apply(state: frozenset[Atom], action: GroundAction) -> frozenset[Atom]:
    if not applicable(state, action):
        raise InapplicableAction(f"{action} is not applicable")
    return (state - action.delete) | action.add


def goal_satisfied(state: frozenset[Atom], goal: GroundGoal) -> bool:
    return any(conj.pos <= state and not (conj.neg & state)
               for conj in goal.disjuncts)


def _substitute(lit: Literal, binding: dict[str, str]) -> Atom:
    return Atom(lit.predicate, tuple(binding.get(a, a) for a in lit.args))


def _objects_by_type(domain: DomainDef,
                     objects: Iterable[tuple[str, str]]) -> dict[str, list[str]]:
    pairs = list(objects)
    out: dict[str, list[str]] = {}
    for type_name in domain.type_names():
        out[type_name] = sorted(o for o, t in pairs
                                if domain.is_subtype(t, type_name))
    for _, t in pairs:
        out.setdefault(t, sorted(o for o, tt in pairs if tt == t))
    out[ROOT_TYPE] = sorted(o for o, _ in pairs)
    return out


def _equalities_hold(lits: Iterable[Literal], binding: dict[str, str]) -> bool:
    for lit in lits:
        a, b = (binding.get(x, x) for x in lit.args)
        if is_variable(a) or is_variable(b):
            continue
        if (a == b) != lit.positive:
            return False
    return True


def static_predicates(domain: DomainDef) -> set[str]:
    fluent = {lit.predicate for a in domain.actions
              for lit in (*a.add_effects, *a.del_effects)}
    return {p.name for p in domain.predicates} - fluent


def _schema_bindings(schema: ActionSchema, reachable: dict[str, set[Atom]],
                     init: frozenset[Atom], statics: set[str],
                     by_type: dict[str, list[str]]) -> Iterator[dict[str, str]]:
    """Bindings whose positive preconditions are all relaxed-reachable.

    Static negative preconditions are decided against ``init``; fluent
    negative preconditions are ignored (relaxation).
    """
    param_types = {p.name: p.type_name for p in schema.params}
    allowed = {p.name: set(by_type.get(p.type_name, ())) for p in schema.params}
    positives = [l for l in schema.preconditions
                 if l.positive and not l.is_equality]
    equalities = [l for l in schema.preconditions if l.is_equality]
    static_neg = [l for l in schema.preconditions
                  if not l.positive and not l.is_equality
                  and l.predicate in statics]
    # Static atoms first: they are the most selective.
    positives.sort(key=lambda l: (l.predicate not in statics,
                                  len(reachable.get(l.predicate, ()))))

    def extend(i: int, binding: dict[str, str]) -> Iterator[dict[str, str]]:
        if i == len(positives):
            free = [p.name for p in schema.params if p.name not in binding]
            pools = [by_type.get(param_types[v], []) for v in free]
            for combo in itertools.product(*pools):
                full = dict(binding)
                full.update(zip(free, combo))
                if _equalities_hold(equalities, full) and not any(
                        _substitute(l, full) in init for l in static_neg):
                    yield full
            return
        lit = positives[i]
        for atom in reachable.get(lit.predicate, ()):
            if len(atom.args) != len(lit.args):
                continue
            new = dict(binding)
            ok = True
            for term, value in zip(lit.args, atom.args):
                if is_variable(term):
                    if term in new:
                        if new[term] != value:
                            ok = False
                            break
                    elif value in allowed.get(term, ()):
                        new[term] = value
                    else:
                        ok = False
                        break
                elif term != value:
                    ok = False
                    break
            if ok and _equalities_hold(equalities, new):
                yield from extend(i + 1, new)

    yield from extend(0, {})


def ground_actions(domain: DomainDef, objects: Iterable[tuple[str, str]],
                   init: frozenset[Atom]) -> tuple[GroundAction, ...]:
    """Every type-consistent action reachable in the delete relaxation.

    Actions whose positive preconditions can never hold together in any
    relaxed-reachable state are never applicable, so dropping them leaves
    the transition system unchanged.
    """
    by_type = _objects_by_type(domain, objects)
    statics = static_predicates(domain)
    reachable_atoms = set(init)
    reachable: dict[str, set[Atom]] = {}
    for atom in init:
        reachable.setdefault(atom.predicate, set()).add(atom)
    found: dict[tuple[str, tuple[str, ...]], GroundAction] = {}
    changed = True
    while changed:
        changed = False
        for schema in domain.actions:
            # Snapshot so newly added atoms are picked up next round.
            snapshot = {k: list(v) for k, v in reachable.items()}
            for binding in _schema_bindings(schema, snapshot, init, statics,
                                            by_type):
                args = tuple(binding[p.name] for p in schema.params)
                if (schema.name, args) in found:
                    continue
                action = instantiate(schema, binding)
                found[(schema.name, args)] = action
                for atom in action.add:
                    if atom not in reachable_atoms:
                        reachable_atoms.add(atom)
                        reachable.setdefault(atom.predicate, set()).add(atom)
                        changed = True
    return tuple(found[k] for k in sorted(found))


def instantiate(schema: ActionSchema, binding: dict[str, str]) -> GroundAction:
    args = tuple(binding[p.name] for p in schema.params)
    pre_pos = frozenset(_substitute(l, binding) for l in schema.preconditions
                        if l.positive and not l.is_equality)
    pre_neg = frozenset(_substitute(l, binding) for l in schema.preconditions
                        if not l.positive and not l.is_equality)
    add = frozenset(_substitute(l, binding) for l in schema.add_effects)
    delete = frozenset(_substitute(l, binding)
                       for l in schema.del_effects) - add
    return GroundAction(schema.name, args, pre_pos, pre_neg, add, delete)


def ground_goal(goal: GoalFormula, domain: DomainDef,
                objects: Iterable[tuple[str, str]]) -> GroundGoal:
    by_type = _objects_by_type(domain, objects)
    missing = tuple(v.type_name for v in goal.binder
                    if not by_type.get(v.type_name))
    if missing:
        raise GoalUngroundable(
            "no objects of type(s) " + ", ".join(sorted(set(missing))),
            tuple(sorted(set(missing))))
    equalities = [l for l in goal.body if l.is_equality]
    atoms = [l for l in goal.body if not l.is_equality]
    names = [v.name for v in goal.binder]
    disjuncts = []
    bindings = []
    for combo in itertools.product(*(by_type[v.type_name] for v in goal.binder)):
        binding = dict(zip(names, combo))
        if not _equalities_hold(equalities, binding):
            continue
        pos = frozenset(_substitute(l, binding) for l in atoms if l.positive)
        neg = frozenset(_substitute(l, binding) for l in atoms if not l.positive)
        disjuncts.append(Conjunction(pos, neg))
        bindings.append(tuple(zip(names, combo)))
    if not disjuncts:
        raise GoalUngroundable("no binding satisfies the goal's equality "
                               "constraints")
    return GroundGoal(tuple(disjuncts), tuple(bindings))


def ground_problem(domain: DomainDef, problem: ProblemDef) -> GroundProblem:
    goal = ground_goal(problem.goal, domain, problem.objects)
    actions = ground_actions(domain, problem.objects, problem.init)
    return GroundProblem(problem.init, actions, goal)


def dump_actions(actions: Iterable[GroundAction]) -> str:
    """One action per line, for golden tests and debugging."""
    lines = []
    for a in actions:
        parts = [str(a)]
        for label, atoms in (("pre", a.pre_pos), ("not", a.pre_neg),
                             ("add", a.add), ("del", a.delete)):
            if atoms:
                parts.append(f"{label} " + " ".join(map(str, sorted(atoms))))
        lines.append(" | ".join(parts))
    return "\n".join(lines)
