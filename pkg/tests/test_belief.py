import pytest
from hypothesis import given, settings, strategies as st

from beliefplan.alfred import alfred_domain
from beliefplan.belief import (ContradictoryObservation, IncompleteSample,
                               init_from_scene, export_problem, observe,
                               snapshot)
from beliefplan.grounding import ground_problem
from beliefplan.household import FAMILIES, Observation, ObjectView
from beliefplan.pddl import Atom, GoalFormula, Literal, TypedVar, parse_problem, print_problem

from walks import belief_walk

DOMAIN = alfred_domain()
TOMATO_GOAL = GoalFormula(
    (TypedVar("?t", "tomato"), TypedVar("?r", "countertop")),
    (Literal("inReceptacle", ("?t", "?r")),))


def A(pred, *args):
    return Atom(pred, tuple(args))


def view(name, type_name, *attrs):
    return ObjectView(name, type_name, frozenset(attrs))


FRIDGE = view("fridge-1", "fridge", "isReceptacle", "openable", "isFridge")
CABINET = view("cabinet-1", "cabinet", "isReceptacle", "openable")
COUNTER = view("countertop-1", "countertop", "isReceptacle")
DRAWER = view("drawer-1", "drawer", "isReceptacle", "openable")


def tomato_world():
    return init_from_scene({"tomato": 1}, [FRIDGE, CABINET])


def opened_fridge(*contents):
    return Observation("fridge-1", tuple(contents), True,
                       frozenset({"openable", "opened"}), "You open fridge-1.")


# -- init_from_scene ----------------------------------------------------------

def test_one_plate_eight_receptacles_gives_one_slot_of_eight():
    recs = [view(f"cabinet-{i}", "cabinet", "isReceptacle", "openable")
            for i in range(1, 9)]
    w, b = init_from_scene([("plate", 1), ("cabinet", 1)], recs)
    assert len(b) == 1
    (key, cands), = b.ordered()
    assert key == ("hyp-plate-1", "inReceptacle") and len(cands) == 8
    assert w.objects["hyp-plate-1"].hypothetical


def test_two_cellphones_two_slots():
    w, b = init_from_scene({"cellphone": 2, "bed": 1}, [COUNTER, FRIDGE])
    assert w.hypotheticals() == ["hyp-cellphone-1", "hyp-cellphone-2"]
    assert len(b) == 2


def test_single_receptacle_promotes_immediately():
    w, b = init_from_scene({"tomato": 1}, [COUNTER])
    assert len(b) == 0
    assert A("inReceptacle", "hyp-tomato-1", "countertop-1") in w.known_true


def test_init_records_intrinsic_attributes_both_ways():
    w, _ = tomato_world()
    assert A("isFridge", "fridge-1") in w.known_true
    assert A("isFridge", "cabinet-1") in w.known_false
    assert A("opened", "fridge-1") in w.known_false
    assert not (w.known_true & w.known_false)


def test_init_needs_receptacles():
    with pytest.raises(ValueError):
        init_from_scene({"tomato": 1}, [])


# -- observe ------------------------------------------------------------------

def test_tomato_collapses_on_sighting():
    w, b = tomato_world()
    w2, b2, new_info = observe(w, b, None,
                               opened_fridge(view("tomato-1", "tomato")))
    assert new_info and len(b2) == 0
    assert A("inReceptacle", "tomato-1", "fridge-1") in w2.known_true
    assert "hyp-tomato-1" not in w2.objects
    assert not w2.objects["tomato-1"].hypothetical
    # The inputs are untouched.
    assert len(b) == 1 and "hyp-tomato-1" in w.objects


def test_empty_fridge_eliminates_then_promotes():
    w, b = tomato_world()
    w2, b2, new_info = observe(w, b, None, opened_fridge())
    assert new_info and len(b2) == 0
    assert A("inReceptacle", "hyp-tomato-1", "cabinet-1") in w2.known_true
    assert A("inReceptacle", "hyp-tomato-1", "fridge-1") in w2.known_false


def test_closed_drawer_hides_nothing_is_eliminated():
    w, b = init_from_scene({"tomato": 1}, [DRAWER, CABINET, COUNTER])
    obs = Observation("drawer-1", (), False, frozenset({"openable"}),
                      "You arrive at drawer-1. The drawer-1 is closed.")
    w2, b2, _ = observe(w, b, None, obs)
    assert b2.slots == b.slots
    assert A("atReceptacleLocation", "drawer-1") in w2.known_true


def test_repeated_observation_brings_no_new_info():
    w, b = tomato_world()
    w, b, _ = observe(w, b, None, opened_fridge())
    _, _, new_info = observe(w, b, None, opened_fridge())
    assert not new_info


def test_failed_action_counts_as_new_info():
    w, b = tomato_world()
    obs = Observation("start-loc", success=False, feedback="Nothing happens.")
    _, _, new_info = observe(w, b, None, obs)
    assert new_info


def test_missing_known_object_is_a_contradiction():
    w, b = tomato_world()
    w, b, _ = observe(w, b, None, opened_fridge(view("tomato-1", "tomato")))
    with pytest.raises(ContradictoryObservation):
        observe(w, b, None, opened_fridge())


def test_surplus_real_objects_registered_fresh():
    w, b = tomato_world()
    w2, _, _ = observe(w, b, None, opened_fridge(
        view("tomato-1", "tomato"), view("tomato-2", "tomato")))
    assert {"tomato-1", "tomato-2"} <= set(w2.objects)
    assert w2.hypotheticals() == []


def test_two_placeholders_bind_two_distinct_objects():
    w, b = init_from_scene({"cellphone": 2}, [COUNTER, FRIDGE, CABINET])
    obs = Observation("countertop-1", (view("cellphone-1", "cellphone"),
                                       view("cellphone-2", "cellphone")),
                      True, frozenset(), "")
    w2, b2, _ = observe(w, b, None, obs)
    assert w2.hypotheticals() == [] and len(b2) == 0
    assert len(w2.objects) == len(w.objects)


# -- export_problem -----------------------------------------------------------

def test_export_without_slots_is_known_true():
    w, b = init_from_scene({"tomato": 1}, [COUNTER])
    p = export_problem(w, b, (), TOMATO_GOAL)
    assert p.init == frozenset(w.known_true)


def test_export_with_chosen_candidate():
    w, b = tomato_world()
    pick = A("inReceptacle", "hyp-tomato-1", "fridge-1")
    p = export_problem(w, b, {pick}, TOMATO_GOAL)
    assert pick in p.init


def test_export_rejects_incomplete_or_ambiguous_samples():
    w, b = tomato_world()
    with pytest.raises(IncompleteSample):
        export_problem(w, b, (), TOMATO_GOAL)
    with pytest.raises(IncompleteSample):
        export_problem(w, b, b.slots[("hyp-tomato-1", "inReceptacle")],
                       TOMATO_GOAL)


@pytest.mark.parametrize("pick", ["fridge-1", "cabinet-1"])
def test_exported_problem_parses_and_grounds(pick):
    w, b = init_from_scene({"tomato": 1}, [FRIDGE, CABINET, COUNTER])
    p = export_problem(w, b, {A("inReceptacle", "hyp-tomato-1", pick)},
                       TOMATO_GOAL)
    again = parse_problem(print_problem(p), DOMAIN)
    assert again.init == p.init
    assert ground_problem(DOMAIN, again).actions


def test_snapshot_is_json_ready():
    import json
    w, b = tomato_world()
    snap = json.loads(json.dumps(snapshot(w, b)))
    assert snap["beliefs"]["inReceptacle:hyp-tomato-1"] == [
        "(inReceptacle hyp-tomato-1 cabinet-1)",
        "(inReceptacle hyp-tomato-1 fridge-1)"]


# -- properties over fuzzed walks -----------------------------------------------

@settings(max_examples=150, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(0, 29), st.integers(0, 2**32))
def test_fuzzed_walks_keep_every_invariant(family, seed, walk_seed):
    """Monotone knowledge, shrinking slots, no slot of size <= 1, injective
    unification and agreement with the hidden state, checked after every
    observe call."""
    assert belief_walk(family, seed, walk_seed) > 0
