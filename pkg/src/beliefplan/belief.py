"""Known world state plus candidate locations for objects not yet pinned down.

Facts are three-valued: known true, known false, or unknown. The only
unknown family is ``inReceptacle``: every tracked object whose location is
uncertain owns a slot listing the receptacles it could be in, and exactly
one of them is true. Objects the task needs but that have not been seen
yet are represented by typed hypothetical placeholders.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from beliefplan import alfred
from beliefplan.alfred import (AT_LOCATION, HAND_EMPTY, IN_RECEPTACLE,
                               OBSERVED_PREDICATES, START_LOCATION, START_TYPE)
from beliefplan.grounding import GroundAction
from beliefplan.household import Observation, ObjectView
from beliefplan.pddl import Atom, GoalFormula, ProblemDef

HYPOTHETICAL_PREFIX = "hyp-"


class ContradictoryObservation(RuntimeError):
    pass


class IncompleteSample(ValueError):
    pass


@dataclass(frozen=True)
class ObjectInfo:
    name: str
    type_name: str
    hypothetical: bool = False
    receptacle: bool = False


@dataclass
class WorldModel:
    known_true: set[Atom] = field(default_factory=set)
    known_false: set[Atom] = field(default_factory=set)
    objects: dict[str, ObjectInfo] = field(default_factory=dict)

    @property
    def receptacles(self) -> list[str]:
        return [o.name for o in self.objects.values() if o.receptacle]

    @property
    def location(self) -> str | None:
        for atom in self.known_true:
            if atom.predicate == AT_LOCATION:
                return atom.args[0]
        return None

    def hypotheticals(self) -> list[str]:
        return sorted(o.name for o in self.objects.values() if o.hypothetical)

    def set_true(self, atom: Atom) -> None:
        self.known_true.add(atom)
        self.known_false.discard(atom)

    def set_false(self, atom: Atom) -> None:
        self.known_false.add(atom)
        self.known_true.discard(atom)

    def copy(self) -> WorldModel:
        return WorldModel(set(self.known_true), set(self.known_false),
                          dict(self.objects))


@dataclass
class BeliefSet:
    """``slots[(object, family)]`` holds the candidate atoms, exactly one of
    which is true."""
    slots: dict[tuple[str, str], frozenset[Atom]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.slots)

    def copy(self) -> BeliefSet:
        return BeliefSet(dict(self.slots))

    def ordered(self) -> list[tuple[tuple[str, str], list[Atom]]]:
        """Slots and their candidates in a deterministic order."""
        return [(key, sorted(self.slots[key])) for key in sorted(self.slots)]


def _record_attributes(w: WorldModel, name: str,
                       attributes: Iterable[str],
                       predicates: Sequence[str] = OBSERVED_PREDICATES) -> None:
    attributes = set(attributes)
    for pred in predicates:
        atom = Atom(pred, (name,))
        if pred in attributes:
            w.set_true(atom)
        else:
            w.set_false(atom)


def _settle(w: WorldModel, b: BeliefSet) -> None:
    """Promote single-candidate slots; fail on empty ones."""
    for key in sorted(b.slots):
        cands = b.slots[key]
        if not cands:
            raise ContradictoryObservation(
                f"no candidate location left for {key[0]}")
        if len(cands) == 1:
            (atom,) = cands
            w.set_true(atom)
            del b.slots[key]


def init_from_scene(goal_types: Mapping[str, int] | Sequence[tuple[str, int]],
                    receptacles: Sequence[ObjectView]) -> tuple[WorldModel,
                                                                 BeliefSet]:
    """Build W and B from the receptacle listing and the goal's types.

    Each required non-receptacle type with multiplicity m gets m
    hypothetical objects that could be in any receptacle.
    """
    if not receptacles:
        raise ValueError("the scene lists no receptacles")
    w = WorldModel()
    b = BeliefSet()
    w.objects[START_LOCATION] = ObjectInfo(START_LOCATION, START_TYPE)
    w.set_true(Atom(AT_LOCATION, (START_LOCATION,)))
    w.set_true(Atom(HAND_EMPTY))
    for view in receptacles:
        w.objects[view.name] = ObjectInfo(view.name, view.type_name,
                                          receptacle=True)
        _record_attributes(w, view.name, view.attributes,
                           alfred.INTRINSIC_PREDICATES)
        if "openable" in view.attributes:
            opened = Atom("opened", (view.name,))
            if "opened" in view.attributes:
                w.set_true(opened)
            else:
                w.set_false(opened)
    scene_types = {v.type_name for v in receptacles}
    items = goal_types.items() if isinstance(goal_types, Mapping) else goal_types
    names = [v.name for v in receptacles]
    for type_name, count in items:
        if type_name in scene_types or alfred.is_receptacle_type(type_name):
            continue
        for k in range(1, count + 1):
            hyp = f"{HYPOTHETICAL_PREFIX}{type_name}-{k}"
            w.objects[hyp] = ObjectInfo(hyp, type_name, hypothetical=True)
            _record_attributes(w, hyp, alfred.object_attributes(type_name),
                               alfred.INTRINSIC_PREDICATES)
            b.slots[(hyp, IN_RECEPTACLE)] = frozenset(
                Atom(IN_RECEPTACLE, (hyp, r)) for r in names)
    _settle(w, b)
    return w, b


def _rename(w: WorldModel, b: BeliefSet, old: str, new: ObjectInfo) -> None:
    def sub(atom: Atom) -> Atom:
        return Atom(atom.predicate, tuple(new.name if a == old else a
                                          for a in atom.args))
    w.known_true = {sub(a) for a in w.known_true}
    w.known_false = {sub(a) for a in w.known_false}
    del w.objects[old]
    w.objects[new.name] = new
    b.slots.pop((old, IN_RECEPTACLE), None)


def _locate(w: WorldModel, b: BeliefSet, name: str, where: str) -> None:
    for atom in [a for a in w.known_true
                 if a.predicate == IN_RECEPTACLE and a.args[0] == name]:
        if atom.args[1] != where:
            w.set_false(atom)
    w.set_true(Atom(IN_RECEPTACLE, (name, where)))
    w.set_false(Atom("holds", (name,)))
    b.slots.pop((name, IN_RECEPTACLE), None)


def observe(w: WorldModel, b: BeliefSet, action: GroundAction | None,
            obs: Observation) -> tuple[WorldModel, BeliefSet, bool]:
    """Fold an action's effects and the resulting observation into W and B.

    Returns copies plus ``new_info``, which is true when anything changed
    beyond the action's own predicted effects (or the action failed).
    """
    w = w.copy()
    b = b.copy()
    if action is not None and obs.success:
        for atom in action.delete:
            w.set_false(atom)
        for atom in action.add:
            w.set_true(atom)
    before = (frozenset(w.known_true), frozenset(w.known_false),
              dict(w.objects), dict(b.slots))

    here = obs.location
    if here in w.objects and w.objects[here].receptacle:
        for r in w.receptacles + [START_LOCATION]:
            atom = Atom(AT_LOCATION, (r,))
            if r == here:
                w.set_true(atom)
            elif atom in w.known_true:
                w.set_false(atom)
        if "openable" in obs.receptacle_attrs:
            opened = Atom("opened", (here,))
            if "opened" in obs.receptacle_attrs:
                w.set_true(opened)
            else:
                w.set_false(opened)
        if obs.visible:
            _merge_contents(w, b, here, obs.contents)
    _settle(w, b)
    after = (frozenset(w.known_true), frozenset(w.known_false),
             dict(w.objects), dict(b.slots))
    new_info = after != before or not obs.success
    return w, b, new_info


def _merge_contents(w: WorldModel, b: BeliefSet, here: str,
                    contents: Sequence[ObjectView]) -> None:
    seen = {v.name for v in contents}
    matched: set[str] = set()
    for view in contents:
        info = w.objects.get(view.name)
        if info is None:
            hyp = _pick_hypothetical(w, b, view.type_name, here, matched)
            info = ObjectInfo(view.name, view.type_name)
            if hyp is not None:
                _rename(w, b, hyp, info)
                matched.add(view.name)
            else:
                w.objects[view.name] = info
        _record_attributes(w, view.name, view.attributes)
        _locate(w, b, view.name, here)
    # Anything we thought was here but is not visible here is elsewhere.
    for atom in list(w.known_true):
        if atom.predicate == IN_RECEPTACLE and atom.args[1] == here \
                and atom.args[0] not in seen:
            raise ContradictoryObservation(
                f"{atom.args[0]} was known to be in {here} but is not seen")
    for key in sorted(b.slots):
        name, _ = key
        if name in seen:
            continue
        atom = Atom(IN_RECEPTACLE, (name, here))
        if atom in b.slots[key]:
            b.slots[key] = b.slots[key] - {atom}
            w.set_false(atom)


def _pick_hypothetical(w: WorldModel, b: BeliefSet, type_name: str,
                       here: str, matched: set[str]) -> str | None:
    for hyp in w.hypotheticals():
        if w.objects[hyp].type_name != type_name:
            continue
        slot = b.slots.get((hyp, IN_RECEPTACLE))
        at_here = Atom(IN_RECEPTACLE, (hyp, here))
        if (slot is not None and at_here in slot) or at_here in w.known_true:
            return hyp
    return None


def export_problem(w: WorldModel, b: BeliefSet, sample: Iterable[Atom],
                   goal: GoalFormula, name: str = "sampled") -> ProblemDef:
    """ProblemDef for the world ``known_true`` plus one chosen candidate per
    open slot."""
    sample = frozenset(sample)
    for key, cands in b.slots.items():
        chosen = cands & sample
        if len(chosen) != 1:
            raise IncompleteSample(
                f"slot {key} needs exactly one chosen candidate, got "
                f"{len(chosen)}")
    objects = tuple((o.name, o.type_name) for o in w.objects.values())
    return ProblemDef(name, "alfred", objects,
                      frozenset(w.known_true) | sample, goal)


def snapshot(w: WorldModel, b: BeliefSet) -> dict:
    """JSON-ready dump of W and B."""
    return {
        "known_true": sorted(str(a) for a in w.known_true),
        "known_false": sorted(str(a) for a in w.known_false),
        "objects": {o.name: {"type": o.type_name,
                             "hypothetical": o.hypothetical}
                    for o in sorted(w.objects.values(), key=lambda o: o.name)},
        "beliefs": {f"{k[1]}:{k[0]}": [str(a) for a in sorted(v)]
                    for k, v in sorted(b.slots.items())},
    }
