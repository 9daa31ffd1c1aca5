"""Seeded text household environment with hidden object placements.

Observation text grammar (one line each, in order)::

    reset:   You are in the middle of a room. Looking around you, you see
             <r1>, <r2>, ..., and <rn>.
    arrive:  You arrive at <r>. <view>
    open:    You open <r>. <view>
    close:   You close <r>.
    pick:    You pick up <o> from <r>.
    put:     You put <o> in/on <r>.
    clean:   You clean <o> using <r>.      (heat / cool likewise)
    examine: You examine <o> under <l>.
    invalid: Nothing happens.

    <view> is "The <r> is closed." when contents are hidden, otherwise
    "On/In the <r>, you see <o1>, ..., and <on>." or "... you see nothing."
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from typing import Sequence

from beliefplan import alfred
from beliefplan.alfred import (AT_LOCATION, HAND_EMPTY, IN_RECEPTACLE,
                               START_LOCATION, START_TYPE, object_attributes,
                               receptacle_attributes)
from beliefplan.pddl import Atom, GoalFormula, Literal, TypedVar

FAMILIES = ("clean", "cool", "examine", "heat", "put", "puttwo")
INVALID_FEEDBACK = "Nothing happens."


class EpisodeFinished(RuntimeError):
    pass


class OracleDisabled(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    family: str
    object_type: str
    receptacle_type: str  # the light type for "examine"
    nl_instruction: str


@dataclass(frozen=True)
class ReceptacleSpec:
    name: str
    type_name: str
    openable: bool
    special: str | None = None


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    type_name: str
    location: str
    clean: bool = False
    hot: bool = False
    cool: bool = False


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    receptacles: tuple[ReceptacleSpec, ...]
    objects: tuple[ObjectSpec, ...]
    task: TaskSpec

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ScenarioSpec:
        data = json.loads(text)
        return cls(data["seed"],
                   tuple(ReceptacleSpec(**r) for r in data["receptacles"]),
                   tuple(ObjectSpec(**o) for o in data["objects"]),
                   TaskSpec(**data["task"]))

    def object_declarations(self) -> tuple[tuple[str, str], ...]:
        return ((START_LOCATION, START_TYPE),
                *((r.name, r.type_name) for r in self.receptacles),
                *((o.name, o.type_name) for o in self.objects))


@dataclass(frozen=True)
class ObjectView:
    name: str
    type_name: str
    attributes: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Observation:
    location: str
    contents: tuple[ObjectView, ...] = ()
    visible: bool = False
    receptacle_attrs: frozenset[str] = frozenset()
    feedback: str = ""
    receptacles: tuple[ObjectView, ...] = ()  # filled on reset only
    success: bool = True

    @property
    def text(self) -> str:
        return self.feedback


# ---------------------------------------------------------------------------
# task families

# family -> (object types, receptacle types)
_TASK_TABLE: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "put": (("apple", "book", "cd", "cellphone", "creditcard", "keychain",
             "mug", "pen", "pencil", "peppershaker", "plate", "saltshaker",
             "soapbar", "spoon", "tomato", "vase"),
            ("cabinet", "countertop", "diningtable", "drawer", "dresser",
             "garbagecan", "safe", "shelf", "sidetable")),
    "clean": (("apple", "bowl", "cup", "fork", "knife", "lettuce", "mug",
               "pan", "plate", "potato", "spoon", "tomato"),
              ("cabinet", "countertop", "diningtable", "drawer", "fridge",
               "microwave", "shelf", "sidetable")),
    "heat": (("apple", "bread", "cup", "egg", "mug", "plate", "potato",
              "tomato"),
             ("cabinet", "coffeemachine", "countertop", "diningtable",
              "fridge", "garbagecan", "shelf")),
    "cool": (("apple", "bowl", "bread", "cup", "egg", "lettuce", "mug",
              "pan", "plate", "potato", "tomato"),
             ("cabinet", "countertop", "diningtable", "microwave", "shelf",
              "sidetable")),
    "examine": (("alarmclock", "book", "bowl", "cd", "cellphone",
                 "creditcard", "keychain", "pen", "pencil", "statue", "vase"),
                alfred.LIGHT_TYPES),
    "puttwo": (("apple", "book", "cd", "cellphone", "creditcard", "keychain",
                "mug", "pen", "pencil", "plate", "soapbar", "tomato"),
               ("bed", "cabinet", "countertop", "desk", "drawer", "dresser",
                "safe", "shelf", "sofa")),
}

_SPECIAL_FOR = {"clean": "sinkbasin", "heat": "microwave", "cool": "fridge"}

_TEMPLATES = {
    "put": "put some {o} on {r}.",
    "clean": "put a clean {o} in {r}.",
    "heat": "put a hot {o} in {r}.",
    "cool": "put a cool {o} in {r}.",
    "examine": "examine the {o} with the {r}.",
    "puttwo": "put two {o} in {r}.",
}


def instruction_for(family: str, object_type: str, receptacle_type: str) -> str:
    return _TEMPLATES[family].format(o=object_type, r=receptacle_type)


def task_goal(task: TaskSpec) -> GoalFormula:
    """The goal formula that exactly captures ``task``."""
    o, r = task.object_type, task.receptacle_type
    if task.family == "examine":
        return GoalFormula(
            (TypedVar("?t", o), TypedVar("?l", r)),
            (Literal("examined", ("?t", "?l")), Literal("holds", ("?t",))))
    if task.family == "puttwo":
        return GoalFormula(
            (TypedVar("?t1", o), TypedVar("?t2", o), TypedVar("?r", r)),
            (Literal(IN_RECEPTACLE, ("?t1", "?r")),
             Literal(IN_RECEPTACLE, ("?t2", "?r")),
             Literal("=", ("?t1", "?t2"), positive=False)))
    body = [Literal(IN_RECEPTACLE, ("?t", "?r"))]
    flag = {"clean": "isClean", "heat": "isHot", "cool": "isCool"}.get(
        task.family)
    if flag:
        body.append(Literal(flag, ("?t",)))
    return GoalFormula((TypedVar("?t", o), TypedVar("?r", r)), tuple(body))


def generate_scenario(family: str, seed: int) -> ScenarioSpec:
    """Deterministic scenario for ``family``; the task is solvable and not
    already satisfied."""
    if family not in _TASK_TABLE:
        raise ValueError(f"unknown task family {family!r}")
    rng = random.Random(f"{family}:{seed}")
    obj_pool, rec_pool = _TASK_TABLE[family]
    target_obj = rng.choice(obj_pool)
    target_rec = rng.choice(rec_pool)

    n_recs = rng.randint(6, 12)
    rec_types: list[str] = []
    if family != "examine":
        rec_types.append(target_rec)
    if family in _SPECIAL_FOR and _SPECIAL_FOR[family] not in rec_types:
        rec_types.append(_SPECIAL_FOR[family])
    if family == "examine":
        rec_types.append(rng.choice(alfred.LAMP_HOLDERS))
    others = sorted(alfred.RECEPTACLE_TYPES)
    while len(rec_types) < n_recs:
        rec_types.append(rng.choice(others))
    rng.shuffle(rec_types)
    receptacles = _number_receptacles(rec_types)

    n_objs = rng.randint(5, 15)
    obj_types = [target_obj] * (2 if family == "puttwo" else 1)
    if family == "examine":
        obj_types.append(target_rec)
    distractors = [t for t in alfred.OBJECT_TYPES if t not in alfred.LIGHT_TYPES]
    while len(obj_types) < n_objs:
        obj_types.append(rng.choice(distractors))

    holders = [r for r in receptacles if r.type_name in alfred.LAMP_HOLDERS]
    # Keep the goal unsatisfied at the start: no target-type object begins
    # inside a target-type receptacle.
    def allowed(obj_type: str) -> list[ReceptacleSpec]:
        if obj_type in alfred.LIGHT_TYPES:
            return holders
        if obj_type == target_obj and family != "examine":
            return [r for r in receptacles if r.type_name != target_rec]
        return list(receptacles)

    placed = []
    counters: dict[str, int] = {}
    for t in obj_types:
        counters[t] = counters.get(t, 0) + 1
        loc = rng.choice(allowed(t))
        placed.append(ObjectSpec(f"{t}-{counters[t]}", t, loc.name))
    task = TaskSpec(family, target_obj, target_rec,
                    instruction_for(family, target_obj, target_rec))
    spec = ScenarioSpec(seed, tuple(receptacles), tuple(placed), task)
    _check_witness(spec)
    return spec


def _number_receptacles(types: list[str]) -> list[ReceptacleSpec]:
    counters: dict[str, int] = {}
    out = []
    for type_name in types:
        counters[type_name] = counters.get(type_name, 0) + 1
        openable, special = alfred.RECEPTACLE_TYPES[type_name]
        out.append(ReceptacleSpec(f"{type_name}-{counters[type_name]}",
                                  type_name, openable, special))
    return out


def witness_plan(spec: ScenarioSpec) -> list[tuple[str, tuple[str, ...]]]:
    """A hand-built (not necessarily shortest) plan that solves the task."""
    recs = {r.name: r for r in spec.receptacles}
    task = spec.task
    plan: list[tuple[str, tuple[str, ...]]] = []
    state = {"at": START_LOCATION, "opened": set()}

    def goto(r: str):
        if state["at"] != r:
            plan.append(("gotoReceptacle", (state["at"], r)))
            state["at"] = r
        if recs[r].openable and r not in state["opened"]:
            plan.append(("openReceptacle", (r,)))
            state["opened"].add(r)

    def fetch(obj: ObjectSpec):
        goto(obj.location)
        name = "pickupFromOpen" if recs[obj.location].openable \
            else "pickupFromSurface"
        plan.append((name, (obj.name, obj.location)))

    def place(obj: ObjectSpec, target: str):
        goto(target)
        name = "putObjectInOpen" if recs[target].openable else "putObject"
        plan.append((name, (obj.name, target)))

    targets = [o for o in spec.objects if o.type_name == task.object_type]
    if task.family == "examine":
        lamp = next(o for o in spec.objects
                    if o.type_name == task.receptacle_type)
        obj = next(o for o in targets if o.name != lamp.name)
        fetch(obj)
        goto(lamp.location)
        plan.append(("examineObjectInLight", (obj.name, lamp.name,
                                              lamp.location)))
        return plan
    dest = next(r.name for r in spec.receptacles
                if r.type_name == task.receptacle_type)
    count = 2 if task.family == "puttwo" else 1
    for obj in targets[:count]:
        fetch(obj)
        if task.family in _SPECIAL_FOR:
            station = next(r.name for r in spec.receptacles
                           if r.type_name == _SPECIAL_FOR[task.family])
            goto(station)
            verb = {"clean": "cleanObject", "heat": "heatObject",
                    "cool": "coolObject"}[task.family]
            plan.append((verb, (obj.name, station)))
        place(obj, dest)
    return plan


def _check_witness(spec: ScenarioSpec) -> None:
    env = HouseholdEnv(spec)
    env.reset()
    done = False
    for name, args in witness_plan(spec):
        obs, done = env.step((name, args))
        if not obs.success:
            raise RuntimeError(f"scenario {spec.seed}: witness step "
                               f"{name}{args} failed")
    if not done:
        raise RuntimeError(f"scenario {spec.seed}: witness plan does not "
                           "reach the goal")


# ---------------------------------------------------------------------------
# simulator

def _listing(names: Sequence[str]) -> str:
    if not names:
        return "nothing"
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + ", and " + names[-1]


class HouseholdEnv:
    """One episode of the household world.

    The hidden state is kept in plain Python containers and transitions are
    written directly against them, independent of the grounding module.
    """

    def __init__(self, spec: ScenarioSpec, oracle_enabled: bool = False):
        self.spec = spec
        self.oracle_enabled = oracle_enabled
        self._recs = {r.name: r for r in spec.receptacles}
        self._types = {o.name: o.type_name for o in spec.objects}
        self._types.update((r.name, r.type_name) for r in spec.receptacles)
        self.reset()

    # -- episode control -------------------------------------------------
    def reset(self, spec: ScenarioSpec | None = None) -> tuple[Observation, str]:
        if spec is not None and spec is not self.spec:
            self.spec = spec
            self._recs = {r.name: r for r in spec.receptacles}
            self._types = {o.name: o.type_name for o in spec.objects}
            self._types.update((r.name, r.type_name) for r in spec.receptacles)
        self.location = START_LOCATION
        self.holding: str | None = None
        self.where = {o.name: o.location for o in self.spec.objects}
        self.opened: set[str] = set()
        self.clean = {o.name for o in self.spec.objects if o.clean}
        self.hot = {o.name for o in self.spec.objects if o.hot}
        self.cool = {o.name for o in self.spec.objects if o.cool}
        self.examined: set[tuple[str, str]] = set()
        self.steps = 0
        self.done = False
        names = [r.name for r in self.spec.receptacles]
        text = ("You are in the middle of a room. Looking around you, you "
                f"see {_listing(names)}.")
        recs = tuple(ObjectView(r.name, r.type_name,
                                receptacle_attributes(r.type_name))
                     for r in self.spec.receptacles)
        obs = Observation(START_LOCATION, (), False, frozenset(), text, recs)
        return obs, self.spec.task.nl_instruction

    @property
    def instruction(self) -> str:
        return self.spec.task.nl_instruction

    def step(self, action) -> tuple[Observation, bool]:
        if self.done:
            raise EpisodeFinished("episode already finished")
        self.steps += 1
        name, args = _action_key(action)
        handler = getattr(self, f"_do_{name}", None)
        feedback = None
        if handler is not None:
            try:
                feedback = handler(*args)
            except TypeError:
                feedback = None
        if feedback is None:
            return self._view(INVALID_FEEDBACK, success=False), False
        self.done = self._task_done()
        return self._view(feedback), self.done

    def oracle_state(self) -> frozenset[Atom]:
        if not self.oracle_enabled:
            raise OracleDisabled("oracle access is disabled for this episode")
        return self.state_atoms()

    def state_atoms(self) -> frozenset[Atom]:
        atoms = {Atom(AT_LOCATION, (self.location,))}
        for r in self.spec.receptacles:
            atoms.update(Atom(p, (r.name,))
                         for p in receptacle_attributes(r.type_name))
        for o in self.spec.objects:
            atoms.update(Atom(p, (o.name,))
                         for p in object_attributes(o.type_name))
        atoms.update(Atom("opened", (r,)) for r in self.opened)
        atoms.update(Atom(IN_RECEPTACLE, (o, r))
                     for o, r in self.where.items() if r is not None)
        if self.holding is None:
            atoms.add(Atom(HAND_EMPTY))
        else:
            atoms.add(Atom("holds", (self.holding,)))
        atoms.update(Atom("isClean", (o,)) for o in self.clean)
        atoms.update(Atom("isHot", (o,)) for o in self.hot)
        atoms.update(Atom("isCool", (o,)) for o in self.cool)
        atoms.update(Atom("examined", pair) for pair in self.examined)
        return frozenset(atoms)

    # -- observation -----------------------------------------------------
    def _visible(self, r: str) -> bool:
        rec = self._recs.get(r)
        return rec is not None and (not rec.openable or r in self.opened)

    def _object_view(self, o: str) -> ObjectView:
        attrs = set(object_attributes(self._types[o]))
        if o in self.clean:
            attrs.add("isClean")
        if o in self.hot:
            attrs.add("isHot")
        if o in self.cool:
            attrs.add("isCool")
        return ObjectView(o, self._types[o], frozenset(attrs))

    def _describe(self, r: str) -> str:
        if not self._visible(r):
            return f"The {r} is closed."
        prep = "In" if self._recs[r].openable else "On"
        names = sorted(o for o, loc in self.where.items() if loc == r)
        return f"{prep} the {r}, you see {_listing(names)}."

    def _view(self, feedback: str, success: bool = True) -> Observation:
        r = self.location
        if r not in self._recs:
            return Observation(r, (), False, frozenset(), feedback,
                               success=success)
        visible = self._visible(r)
        contents = ()
        if visible:
            contents = tuple(self._object_view(o) for o in sorted(self.where)
                             if self.where[o] == r)
        attrs = set(receptacle_attributes(self._recs[r].type_name))
        if r in self.opened:
            attrs.add("opened")
        return Observation(r, contents, visible, frozenset(attrs), feedback,
                           success=success)

    # -- transitions: each returns feedback text or None when invalid -----
    def _do_gotoReceptacle(self, frm, to):
        if frm != self.location or to not in self._recs or to == frm:
            return None
        self.location = to
        return f"You arrive at {to}. {self._describe(to)}"

    def _do_openReceptacle(self, r):
        rec = self._recs.get(r)
        if self.location != r or rec is None or not rec.openable \
                or r in self.opened:
            return None
        self.opened.add(r)
        return f"You open {r}. {self._describe(r)}"

    def _do_closeReceptacle(self, r):
        rec = self._recs.get(r)
        if self.location != r or rec is None or not rec.openable \
                or r not in self.opened:
            return None
        self.opened.discard(r)
        return f"You close {r}."

    def _pickup(self, o, r, needs_open):
        rec = self._recs.get(r)
        if (rec is None or self.location != r or self.where.get(o) != r
                or self.holding is not None or rec.openable != needs_open
                or (needs_open and r not in self.opened)):
            return None
        self.where[o] = None
        self.holding = o
        return f"You pick up {o} from {r}."

    def _do_pickupFromSurface(self, o, r):
        return self._pickup(o, r, False)

    def _do_pickupFromOpen(self, o, r):
        return self._pickup(o, r, True)

    def _put(self, o, r, needs_open):
        rec = self._recs.get(r)
        if (rec is None or self.location != r or self.holding != o
                or rec.openable != needs_open
                or (needs_open and r not in self.opened)):
            return None
        self.where[o] = r
        self.holding = None
        return f"You put {o} in/on {r}."

    def _do_putObject(self, o, r):
        return self._put(o, r, False)

    def _do_putObjectInOpen(self, o, r):
        return self._put(o, r, True)

    def _at_special(self, o, r, special):
        rec = self._recs.get(r)
        return (rec is not None and self.holding == o and self.location == r
                and rec.special == special)

    def _do_cleanObject(self, o, s):
        if not self._at_special(o, s, "isSink"):
            return None
        self.clean.add(o)
        return f"You clean {o} using {s}."

    def _do_heatObject(self, o, m):
        if not self._at_special(o, m, "isMicrowave"):
            return None
        self.hot.add(o)
        self.cool.discard(o)
        return f"You heat {o} using {m}."

    def _do_coolObject(self, o, f):
        if not self._at_special(o, f, "isFridge"):
            return None
        self.cool.add(o)
        self.hot.discard(o)
        return f"You cool {o} using {f}."

    def _do_examineObjectInLight(self, o, lamp, r):
        if (self.holding != o or o == lamp or self.location != r
                or self.where.get(lamp) != r
                or self._types.get(lamp) not in alfred.LIGHT_TYPES):
            return None
        self.examined.add((o, lamp))
        return f"You examine {o} under {lamp}."

    # -- success -----------------------------------------------------------
    def _task_done(self) -> bool:
        task = self.spec.task
        objs = [o for o, t in self._types.items() if t == task.object_type
                and o not in self._recs]
        if task.family == "examine":
            return self.holding in objs and any(
                (self.holding, l) in self.examined for l, t in
                self._types.items() if t == task.receptacle_type)
        placed: dict[str, int] = {}
        for o in objs:
            r = self.where.get(o)
            if r is None or self._types[r] != task.receptacle_type:
                continue
            if task.family == "clean" and o not in self.clean:
                continue
            if task.family == "heat" and o not in self.hot:
                continue
            if task.family == "cool" and o not in self.cool:
                continue
            placed[r] = placed.get(r, 0) + 1
        need = 2 if task.family == "puttwo" else 1
        return any(n >= need for n in placed.values())


def _action_key(action) -> tuple[str, tuple[str, ...]]:
    if isinstance(action, tuple) and len(action) == 2:
        return action[0], tuple(action[1])
    if isinstance(action, str):
        parts = action.strip().strip("()").split() or [""]
        return parts[0], tuple(parts[1:])
    return action.name, tuple(action.args)
