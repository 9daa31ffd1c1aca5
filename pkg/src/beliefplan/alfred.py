"""Household domain vocabulary: the planning domain, object and receptacle
catalog, and which predicates are observable attributes."""
from __future__ import annotations

import functools
from importlib import resources

from beliefplan.pddl import DomainDef, parse_domain

START_LOCATION = "start-loc"
START_TYPE = "location"

IN_RECEPTACLE = "inReceptacle"
AT_LOCATION = "atReceptacleLocation"
HAND_EMPTY = "handEmpty"

# Fixed per object; always reported by an observation.
INTRINSIC_PREDICATES = ("isReceptacle", "openable", "isLight", "isSink",
                        "isMicrowave", "isFridge")
# Object state flags; also reported, but actions can change them.
STATE_PREDICATES = ("isClean", "isHot", "isCool")
OBSERVED_PREDICATES = INTRINSIC_PREDICATES + STATE_PREDICATES

# receptacle type -> (openable, special attribute or None)
RECEPTACLE_TYPES: dict[str, tuple[bool, str | None]] = {
    "armchair": (False, None),
    "bed": (False, None),
    "cabinet": (True, None),
    "coffeemachine": (False, None),
    "countertop": (False, None),
    "desk": (False, None),
    "diningtable": (False, None),
    "drawer": (True, None),
    "dresser": (False, None),
    "fridge": (True, "isFridge"),
    "garbagecan": (False, None),
    "microwave": (True, "isMicrowave"),
    "safe": (True, None),
    "shelf": (False, None),
    "sidetable": (False, None),
    "sinkbasin": (False, "isSink"),
    "sofa": (False, None),
    "stoveburner": (False, None),
}

LIGHT_TYPES = ("desklamp", "floorlamp")
LAMP_HOLDERS = ("desk", "dresser", "sidetable")

OBJECT_TYPES = (
    "alarmclock", "apple", "book", "bowl", "bread", "cd", "cellphone",
    "creditcard", "cup", "desklamp", "egg", "floorlamp", "fork", "keychain",
    "knife", "lettuce", "mug", "pan", "pen", "pencil", "peppershaker",
    "plate", "potato", "saltshaker", "soapbar", "spoon", "statue",
    "tomato", "vase",
)


def receptacle_attributes(type_name: str) -> frozenset[str]:
    openable, special = RECEPTACLE_TYPES[type_name]
    attrs = {"isReceptacle"}
    if openable:
        attrs.add("openable")
    if special:
        attrs.add(special)
    return frozenset(attrs)


def object_attributes(type_name: str) -> frozenset[str]:
    """Intrinsic attributes implied by an object type."""
    if type_name in RECEPTACLE_TYPES:
        return receptacle_attributes(type_name)
    if type_name in LIGHT_TYPES:
        return frozenset({"isLight"})
    return frozenset()


def is_receptacle_type(type_name: str) -> bool:
    return type_name in RECEPTACLE_TYPES


def all_type_names() -> tuple[str, ...]:
    return (START_TYPE, *sorted(RECEPTACLE_TYPES), *OBJECT_TYPES)


def _asset(name: str) -> str:
    return resources.files("beliefplan.assets").joinpath(name).read_text(
        encoding="utf-8")


@functools.lru_cache(maxsize=None)
def alfred_domain() -> DomainDef:
    """Planning domain with the full household type catalog declared."""
    return parse_domain(_asset("alfred.pddl")).with_types(all_type_names())


def predicate_block() -> str:
    """The 14-predicate domain block shown to the language model."""
    return _asset("alfred_predicates.pddl")


def few_shot_text() -> str:
    return _asset("few_shot.txt")
