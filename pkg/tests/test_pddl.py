import random

import pytest
from hypothesis import given, settings, strategies as st

from beliefplan import alfred
from beliefplan.pddl import (ArityMismatch, ArityRedeclaration, Atom,
                             GoalFormula, Literal, MalformedBinder, PDDLError,
                             ProblemDef, TypedVar, TypeMismatch,
                             UnboundVariable, UnbalancedParens,
                             UndeclaredObject, UndeclaredPredicate,
                             UnknownSection, UnknownType, check_problem,
                             parse_domain, parse_goal, parse_problem,
                             parse_sexprs, print_domain, print_goal,
                             print_problem, tokenize, validate_goal)

from gen import random_pair

CLEAN_PLATE = """(:goal
(exists (?t - plate ?r - microwave)
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


@pytest.fixture(scope="module")
def domain():
    return alfred.alfred_domain()


def _problem(body: str, objects: str = "fridge-1 - fridge") -> str:
    return f"""(define (problem p) (:domain alfred)
      (:objects {objects})
      (:init {body})
      (:goal (and)))"""


# -- parsing -----------------------------------------------------------------

def test_predicate_block_has_fourteen_predicates():
    d = parse_domain(alfred.predicate_block())
    assert len(d.predicates) == 14
    examined = d.predicate("examined")
    assert examined is not None and examined.arity == 2
    assert [p.name for p in d.predicates][:3] == [
        "isReceptacle", "atReceptacleLocation", "inReceptacle"]


def test_planning_domain_extends_the_block_with_hand_empty(domain):
    names = [p.name for p in domain.predicates]
    block = [p.name for p in parse_domain(alfred.predicate_block()).predicates]
    assert names[:14] == block
    assert names[14:] == ["handEmpty"]
    assert domain.predicate("handEmpty").arity == 0


def test_empty_predicate_section():
    d = parse_domain("(define (domain d) (:predicates))")
    assert d.predicates == ()


def test_arity_redeclaration():
    with pytest.raises(ArityRedeclaration):
        parse_domain("(define (domain d) (:predicates (p ?a) (p ?a ?b)))")


def test_unbalanced_parens_reports_position():
    with pytest.raises(UnbalancedParens) as err:
        parse_domain("(define (domain d) (:predicates (p ?a)")
    assert err.value.position == 19  # the innermost unclosed paren
    with pytest.raises(UnbalancedParens) as err:
        parse_sexprs("(a))")
    assert err.value.position == 3


def test_unknown_section():
    with pytest.raises(UnknownSection):
        parse_domain("(define (domain d) (:functions (f)))")


def test_comments_ignored_and_keywords_case_insensitive():
    text = """; leading comment
    (DEFINE (DOMAIN d) ; trailing
      (:PREDICATES (Foo ?x - object) ; Foo keeps its case
      ))"""
    d = parse_domain(text)
    assert [p.name for p in d.predicates] == ["Foo"]


def test_tokenize_offsets():
    assert tokenize("(a bc)") == [("(", 0), ("a", 1), ("bc", 3), (")", 5)]


def test_problem_single_init_atom(domain):
    p = parse_problem(_problem("(isFridge fridge-1)"), domain)
    assert p.init == frozenset({Atom("isFridge", ("fridge-1",))})


def test_problem_two_cd_goal(domain):
    text = f"""(define (problem p) (:domain alfred)
      (:objects cd-1 cd-2 - cd safe-1 - safe)
      (:init)
      {TWO_CD})"""
    p = parse_problem(text, domain)
    assert len(p.goal.binder) == 3
    assert Literal("=", ("?t1", "?t2"), False) in p.goal.body


def test_problem_undeclared_predicate(domain):
    with pytest.raises(UndeclaredPredicate):
        parse_problem(_problem("(isShiny fridge-1)"), domain)


def test_problem_undeclared_object(domain):
    with pytest.raises(UndeclaredObject):
        parse_problem(_problem("(isFridge fridge-9)"), domain)


def test_problem_type_mismatch():
    d = parse_domain("""(define (domain d) (:types a b)
        (:predicates (p ?x - a)))""")
    text = """(define (problem q) (:domain d) (:objects o - b)
        (:init (p o)) (:goal (and)))"""
    with pytest.raises(TypeMismatch):
        parse_problem(text, d)


def test_problem_arity_mismatch(domain):
    with pytest.raises(ArityMismatch):
        parse_problem(_problem("(isFridge fridge-1 fridge-1)"), domain)


def test_goal_clean_plate(domain):
    g = parse_goal(CLEAN_PLATE, domain)
    assert g.binder == (TypedVar("?t", "plate"), TypedVar("?r", "microwave"))
    assert set(g.body) == {Literal("inReceptacle", ("?t", "?r")),
                           Literal("isClean", ("?t",))}


def test_goal_empty_conjunction(domain):
    g = parse_goal("(:goal (and))", domain)
    assert g == GoalFormula((), ())


def test_goal_bare_literal_inside_exists(domain):
    g = parse_goal("""(:goal (exists (?t - peppershaker ?r - drawer)
        (inReceptacle ?t ?r)))""", domain)
    assert g.body == (Literal("inReceptacle", ("?t", "?r")),)


def test_goal_mug_as_receptacle_parses(domain):
    g = parse_goal(MUG_RECEPTACLE, domain)
    assert Literal("isReceptacle", ("?m",)) in g.body


def test_goal_nested_and_not(domain):
    g = parse_goal("""(:goal (exists (?t - plate)
        (and (and (isClean ?t)) (not (isHot ?t)))))""", domain)
    assert g.body == (Literal("isClean", ("?t",)),
                      Literal("isHot", ("?t",), False))


def test_goal_errors(domain):
    with pytest.raises(UndeclaredPredicate):
        parse_goal("(:goal (exists (?t - plate) (isShiny ?t)))", domain)
    with pytest.raises(UnboundVariable):
        parse_goal("(:goal (exists (?t - plate) (isClean ?u)))", domain)
    with pytest.raises(UnknownType):
        parse_goal("(:goal (exists (?t - spaceship) (isClean ?t)))", domain)
    with pytest.raises(MalformedBinder):
        parse_goal("(:goal (exists ?t (isClean ?t)))", domain)


def test_validate_goal_returns_violations_as_data(domain):
    g = GoalFormula((TypedVar("?t", "plate"),),
                    (Literal("isShiny", ("?t",)), Literal("isClean", ("?x",))))
    errors = validate_goal(g, domain)
    assert {type(e) for e in errors} == {UndeclaredPredicate, UnboundVariable}
    assert validate_goal(parse_goal(CLEAN_PLATE, domain), domain) == []


# -- printing ----------------------------------------------------------------

def test_alfred_roundtrip(domain):
    assert parse_domain(print_domain(domain)) == domain
    block = parse_domain(alfred.predicate_block())
    assert parse_domain(print_domain(block)) == block


def test_init_printed_lexicographically(domain):
    p = ProblemDef("p", "alfred", (("a", "object"), ("b", "object")),
                   frozenset({Atom("isSink", ("b",)), Atom("isSink", ("a",))}))
    text = print_problem(p)
    assert text.index("(isSink a)") < text.index("(isSink b)")


def test_goal_roundtrip_for_generated_goals(domain):
    for text in (CLEAN_PLATE, TWO_CD, MUG_RECEPTACLE):
        g = parse_goal(text, domain)
        assert parse_goal(print_goal(g), domain) == g


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_roundtrip_property(seed):
    d, p = random_pair(seed)
    d2 = parse_domain(print_domain(d))
    assert d2 == d
    assert parse_problem(print_problem(p), d2) == p


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_parsing_is_pure(seed):
    d, p = random_pair(seed)
    text = print_problem(p)
    assert parse_problem(text, d) == parse_problem(text, d)


def _mutations(atom: Atom, problem: ProblemDef, domain):
    yield Atom(atom.predicate + "Zz", atom.args)          # unknown predicate
    yield Atom(atom.predicate, atom.args + ("extra",))    # wrong arity
    if atom.args:
        yield Atom(atom.predicate, ("ghost",) + atom.args[1:])  # unknown object


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_corrupting_any_init_atom_is_rejected(seed):
    d, p = random_pair(seed)
    for atom in sorted(p.init):
        for bad in _mutations(atom, p, d):
            mutated = ProblemDef(p.name, p.domain_name, p.objects,
                                 (p.init - {atom}) | {bad}, p.goal)
            with pytest.raises(PDDLError):
                check_problem(mutated, d)


def test_unknown_object_type_rejected(domain):
    with pytest.raises(UnknownType):
        parse_problem(_problem("", "x - spaceship"), domain)


def test_random_pairs_are_valid():
    rng = random.Random(0)
    for _ in range(50):
        d, p = random_pair(rng.randrange(2**32))
        check_problem(p, d)
