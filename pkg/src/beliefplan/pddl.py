"""Typed-STRIPS PDDL subset: s-expression reader, AST, parser and printer.

The supported envelope is flat typing under ``object``, conjunctive
preconditions with negation and equality, STRIPS add/delete effects, and
existentially quantified conjunctive goals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union

ROOT_TYPE = "object"
EQUALITY = "="

SExpr = Union[str, list]


class PDDLError(ValueError):
    """Base class for every parse or validation failure."""


class UnbalancedParens(PDDLError):
    def __init__(self, position: int, message: str = "unbalanced parentheses"):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownSection(PDDLError):
    def __init__(self, name: str):
        super().__init__(f"unknown section {name!r}")
        self.name = name


class ArityRedeclaration(PDDLError):
    def __init__(self, predicate: str):
        super().__init__(f"predicate {predicate!r} declared more than once")
        self.predicate = predicate


class UndeclaredPredicate(PDDLError):
    def __init__(self, predicate: str):
        super().__init__(f"undeclared predicate {predicate!r}")
        self.predicate = predicate


class UndeclaredObject(PDDLError):
    def __init__(self, name: str):
        super().__init__(f"undeclared object {name!r}")
        self.name = name


class UnknownType(PDDLError):
    def __init__(self, type_name: str):
        super().__init__(f"unknown type {type_name!r}")
        self.type_name = type_name


class TypeMismatch(PDDLError):
    pass


class ArityMismatch(PDDLError):
    def __init__(self, predicate: str, expected: int, got: int):
        super().__init__(
            f"predicate {predicate!r} takes {expected} argument(s), got {got}")
        self.predicate = predicate
        self.expected = expected
        self.got = got


class UnboundVariable(PDDLError):
    def __init__(self, variable: str):
        super().__init__(f"variable {variable!r} is not bound")
        self.variable = variable


class MalformedBinder(PDDLError):
    pass


class PDDLSyntaxError(PDDLError):
    pass


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class TypedVar:
    name: str
    type_name: str = ROOT_TYPE

    def __str__(self) -> str:
        return f"{self.name} - {self.type_name}"


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    params: tuple[TypedVar, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


def is_variable(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True)
class Literal:
    """A possibly negated atom over variables and constants.

    The predicate ``=`` denotes (in)equality between two terms.
    """
    predicate: str
    args: tuple[str, ...] = ()
    positive: bool = True

    @property
    def is_equality(self) -> bool:
        return self.predicate == EQUALITY

    def negate(self) -> Literal:
        return Literal(self.predicate, self.args, not self.positive)

    def __str__(self) -> str:
        atom = "(" + " ".join((self.predicate, *self.args)) + ")"
        return atom if self.positive else f"(not {atom})"


class Atom(NamedTuple):
    """Ground positive atom."""
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate, *self.args)) + ")"


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[TypedVar, ...]
    preconditions: tuple[Literal, ...] = ()
    add_effects: tuple[Literal, ...] = ()
    del_effects: tuple[Literal, ...] = ()


@dataclass(frozen=True)
class GoalFormula:
    """Existentially quantified conjunction; ``binder`` may be empty."""
    binder: tuple[TypedVar, ...] = ()
    body: tuple[Literal, ...] = ()

    def binder_types(self) -> dict[str, int]:
        """Multiplicity of each bound type, in binder order."""
        counts: dict[str, int] = {}
        for var in self.binder:
            counts[var.type_name] = counts.get(var.type_name, 0) + 1
        return counts


@dataclass(frozen=True)
class DomainDef:
    name: str
    types: tuple[tuple[str, str], ...] = ()
    predicates: tuple[PredicateDecl, ...] = ()
    actions: tuple[ActionSchema, ...] = ()
    requirements: tuple[str, ...] = ()

    def type_names(self) -> set[str]:
        return {ROOT_TYPE, *(name for name, _ in self.types)}

    def predicate(self, name: str) -> PredicateDecl | None:
        for decl in self.predicates:
            if decl.name == name:
                return decl
        return None

    def is_subtype(self, child: str, parent: str) -> bool:
        parents = dict(self.types)
        seen = set()
        while child not in seen:
            if child == parent:
                return True
            seen.add(child)
            if child not in parents:
                break
            child = parents[child]
        return parent == ROOT_TYPE

    def with_types(self, names: Iterable[str]) -> DomainDef:
        """Return a copy whose type universe also holds ``names`` (under
        ``object``)."""
        known = self.type_names()
        extra = []
        for name in names:
            if name not in known:
                known.add(name)
                extra.append((name, ROOT_TYPE))
        if not extra:
            return self
        return DomainDef(self.name, self.types + tuple(extra), self.predicates,
                         self.actions, self.requirements)


@dataclass(frozen=True)
class ProblemDef:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]
    init: frozenset[Atom] = field(default_factory=frozenset)
    goal: GoalFormula = field(default_factory=GoalFormula)

    def object_types(self) -> dict[str, str]:
        return dict(self.objects)


# ---------------------------------------------------------------------------
# s-expressions

def tokenize(text: str) -> list[tuple[str, int]]:
    """Split ``text`` into parenthesis and symbol tokens with offsets.

    Comments run from ``;`` to end of line.
    """
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            start = i
            while i < n and not text[i].isspace() and text[i] not in "();":
                i += 1
            tokens.append((text[start:i], start))
    return tokens


def parse_sexprs(text: str) -> list[SExpr]:
    """Read every top-level s-expression in ``text``."""
    stack: list[list] = [[]]
    opened: list[int] = []
    for tok, pos in tokenize(text):
        if tok == "(":
            stack.append([])
            opened.append(pos)
        elif tok == ")":
            if len(stack) == 1:
                raise UnbalancedParens(pos, "unexpected ')'")
            done = stack.pop()
            opened.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if opened:
        raise UnbalancedParens(opened[-1], "unclosed '('")
    return stack[0]


def parse_sexpr(text: str) -> SExpr:
    exprs = parse_sexprs(text)
    if len(exprs) != 1:
        raise PDDLSyntaxError(
            f"expected exactly one s-expression, found {len(exprs)}")
    return exprs[0]


def _kw(token: SExpr) -> str | None:
    return token.lower() if isinstance(token, str) else None


def _expect_list(expr: SExpr, what: str) -> list:
    if not isinstance(expr, list):
        raise PDDLSyntaxError(f"expected a list for {what}, got {expr!r}")
    return expr


def _expect_symbol(expr: SExpr, what: str) -> str:
    if not isinstance(expr, str):
        raise PDDLSyntaxError(f"expected a symbol for {what}, got {expr!r}")
    return expr


def parse_typed_list(items: Sequence[SExpr]) -> list[tuple[str, str]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    result: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        item = _expect_symbol(items[i], "typed list entry")
        if item == "-":
            if i + 1 >= len(items) or not pending:
                raise PDDLSyntaxError("dangling '-' in typed list")
            type_name = _expect_symbol(items[i + 1], "type name")
            result.extend((name, type_name) for name in pending)
            pending = []
            i += 2
        else:
            pending.append(item)
            i += 1
    result.extend((name, ROOT_TYPE) for name in pending)
    return result


def _typed_vars(items: Sequence[SExpr], what: str) -> tuple[TypedVar, ...]:
    out = []
    seen = set()
    for name, type_name in parse_typed_list(items):
        if not is_variable(name) or len(name) < 2:
            raise MalformedBinder(f"{what}: {name!r} is not a variable")
        if name in seen:
            raise MalformedBinder(f"{what}: variable {name!r} repeated")
        seen.add(name)
        out.append(TypedVar(name, type_name))
    return tuple(out)


def _literal(expr: SExpr) -> Literal:
    expr = _expect_list(expr, "literal")
    if not expr:
        raise PDDLSyntaxError("empty literal")
    head = _expect_symbol(expr[0], "predicate")
    if _kw(head) == "not":
        if len(expr) != 2:
            raise PDDLSyntaxError("'not' takes exactly one argument")
        inner = _literal(expr[1])
        return inner.negate()
    args = tuple(_expect_symbol(a, "argument") for a in expr[1:])
    if head == EQUALITY and len(args) != 2:
        raise PDDLSyntaxError("'=' takes exactly two arguments")
    return Literal(head, args, True)


def _conjunction(expr: SExpr) -> list[Literal]:
    """Flatten nested ``and`` into literals."""
    expr = _expect_list(expr, "formula")
    if not expr:
        return []
    if _kw(expr[0]) == "and":
        out: list[Literal] = []
        for sub in expr[1:]:
            out.extend(_conjunction(sub))
        return out
    if _kw(expr[0]) in ("or", "forall", "exists", "imply", "when"):
        raise PDDLSyntaxError(f"unsupported connective {expr[0]!r}")
    if _kw(expr[0]) == "not" and len(expr) == 2 and isinstance(expr[1], list) \
            and expr[1] and _kw(expr[1][0]) == "and":
        raise PDDLSyntaxError("negated conjunctions are not supported")
    return [_literal(expr)]


def _goal_formula(expr: SExpr) -> GoalFormula:
    expr = _expect_list(expr, "goal")
    if expr and _kw(expr[0]) == "exists":
        if len(expr) != 3 or not isinstance(expr[1], list):
            raise MalformedBinder("exists needs a variable list and a body")
        binder = _typed_vars(expr[1], "exists")
        return GoalFormula(binder, tuple(_conjunction(expr[2])))
    return GoalFormula((), tuple(_conjunction(expr)))


def _sections(expr: list, kind: str) -> tuple[str, list[list]]:
    if len(expr) < 2 or _kw(expr[0]) != "define":
        raise PDDLSyntaxError(f"expected (define ({kind} <name>) ...)")
    header = _expect_list(expr[1], "header")
    if len(header) != 2 or _kw(header[0]) != kind:
        raise PDDLSyntaxError(f"expected ({kind} <name>) header")
    name = _expect_symbol(header[1], f"{kind} name")
    body = [_expect_list(sec, "section") for sec in expr[2:]]
    for sec in body:
        if not sec or not isinstance(sec[0], str):
            raise PDDLSyntaxError("malformed section")
    return name, body


# ---------------------------------------------------------------------------
# domain

def parse_domain(text: str) -> DomainDef:
    name, sections = _sections(_expect_list(parse_sexpr(text), "domain"),
                               "domain")
    requirements: list[str] = []
    types: list[tuple[str, str]] = []
    predicates: list[PredicateDecl] = []
    actions: list[ActionSchema] = []
    for sec in sections:
        key = _kw(sec[0])
        if key == ":requirements":
            requirements.extend(_expect_symbol(r, "requirement").lower()
                                for r in sec[1:])
        elif key == ":types":
            types.extend(parse_typed_list(sec[1:]))
        elif key == ":predicates":
            seen = set()
            for decl in sec[1:]:
                decl = _expect_list(decl, "predicate declaration")
                if not decl:
                    raise PDDLSyntaxError("empty predicate declaration")
                pname = _expect_symbol(decl[0], "predicate name")
                if pname in seen:
                    raise ArityRedeclaration(pname)
                seen.add(pname)
                predicates.append(
                    PredicateDecl(pname, _typed_vars(decl[1:], pname)))
        elif key == ":action":
            actions.append(_action(sec))
        else:
            raise UnknownSection(sec[0])
    domain = DomainDef(name, tuple(types), tuple(predicates), tuple(actions),
                       tuple(requirements))
    _check_domain(domain)
    return domain


def _action(sec: list) -> ActionSchema:
    if len(sec) < 2:
        raise PDDLSyntaxError("action without a name")
    name = _expect_symbol(sec[1], "action name")
    params: tuple[TypedVar, ...] = ()
    pre: list[Literal] = []
    add: list[Literal] = []
    dele: list[Literal] = []
    rest = sec[2:]
    if len(rest) % 2:
        raise PDDLSyntaxError(f"action {name}: odd number of fields")
    for key, value in zip(rest[::2], rest[1::2]):
        k = _kw(key)
        if k == ":parameters":
            params = _typed_vars(_expect_list(value, "parameters"), name)
        elif k == ":precondition":
            pre = _conjunction(value)
        elif k == ":effect":
            for lit in _conjunction(value):
                if lit.is_equality:
                    raise PDDLSyntaxError(f"action {name}: equality effect")
                (add if lit.positive else dele).append(
                    Literal(lit.predicate, lit.args))
        else:
            raise UnknownSection(key)
    return ActionSchema(name, params, tuple(pre), tuple(add), tuple(dele))


def _check_literal(lit: Literal, domain: DomainDef,
                   bound: dict[str, str], constants: dict[str, str] | None,
                   errors: list[PDDLError]) -> None:
    for arg in lit.args:
        if is_variable(arg):
            if arg not in bound:
                errors.append(UnboundVariable(arg))
        elif constants is not None and arg not in constants:
            errors.append(UndeclaredObject(arg))
    if lit.is_equality:
        return
    decl = domain.predicate(lit.predicate)
    if decl is None:
        errors.append(UndeclaredPredicate(lit.predicate))
        return
    if decl.arity != len(lit.args):
        errors.append(ArityMismatch(lit.predicate, decl.arity, len(lit.args)))
        return
    for arg, param in zip(lit.args, decl.params):
        arg_type = bound.get(arg) if is_variable(arg) else (
            constants or {}).get(arg)
        if arg_type is not None and not (
                domain.is_subtype(arg_type, param.type_name)
                or domain.is_subtype(param.type_name, arg_type)):
            errors.append(TypeMismatch(
                f"{arg} of type {arg_type} cannot fill {param.name} - "
                f"{param.type_name} of {lit.predicate}"))


def _check_domain(domain: DomainDef) -> None:
    known_types = domain.type_names()
    for _, parent in domain.types:
        if parent not in known_types:
            raise UnknownType(parent)
    for decl in domain.predicates:
        for p in decl.params:
            if p.type_name not in known_types:
                raise UnknownType(p.type_name)
    for action in domain.actions:
        bound = {p.name: p.type_name for p in action.params}
        for p in action.params:
            if p.type_name not in known_types:
                raise UnknownType(p.type_name)
        errors: list[PDDLError] = []
        for lit in (*action.preconditions, *action.add_effects,
                    *action.del_effects):
            _check_literal(lit, domain, bound, None, errors)
        if errors:
            raise errors[0]


# ---------------------------------------------------------------------------
# goals and problems

def validate_goal(goal: GoalFormula, domain: DomainDef,
                  objects: dict[str, str] | None = None) -> list[PDDLError]:
    """Return every violation in ``goal``; an empty list means it is valid.

    Semantic nonsense that is well-typed (say, a mug declared a receptacle)
    passes; it only shows up later as an unsolvable problem. Constants are
    checked only when ``objects`` is given.
    """
    errors: list[PDDLError] = []
    known_types = domain.type_names()
    bound: dict[str, str] = {}
    for var in goal.binder:
        if var.type_name not in known_types:
            errors.append(UnknownType(var.type_name))
        if var.name in bound:
            errors.append(MalformedBinder(f"variable {var.name!r} repeated"))
        bound[var.name] = var.type_name
    for lit in goal.body:
        _check_literal(lit, domain, bound, objects, errors)
    return errors


def parse_goal(text: str, domain: DomainDef) -> GoalFormula:
    """Parse a ``(:goal ...)`` fragment and validate it against ``domain``."""
    expr = _expect_list(parse_sexpr(text), "goal")
    if len(expr) != 2 or _kw(expr[0]) != ":goal":
        raise PDDLSyntaxError("expected (:goal <formula>)")
    goal = _goal_formula(expr[1])
    errors = validate_goal(goal, domain)
    if errors:
        raise errors[0]
    return goal


def parse_problem(text: str, domain: DomainDef) -> ProblemDef:
    name, sections = _sections(_expect_list(parse_sexpr(text), "problem"),
                               "problem")
    domain_name = domain.name
    objects: list[tuple[str, str]] = []
    init: list[Atom] = []
    goal = GoalFormula()
    for sec in sections:
        key = _kw(sec[0])
        if key == ":domain":
            domain_name = _expect_symbol(sec[1], "domain name")
        elif key == ":objects":
            objects.extend(parse_typed_list(sec[1:]))
        elif key == ":init":
            for atom in sec[1:]:
                lit = _literal(atom)
                if not lit.positive or lit.is_equality:
                    raise PDDLSyntaxError(f"init must hold positive atoms: {lit}")
                init.append(Atom(lit.predicate, lit.args))
        elif key == ":goal":
            if len(sec) != 2:
                raise PDDLSyntaxError("(:goal) takes one formula")
            goal = _goal_formula(sec[1])
        else:
            raise UnknownSection(sec[0])
    problem = ProblemDef(name, domain_name, tuple(objects), frozenset(init),
                         goal)
    check_problem(problem, domain)
    return problem


def check_problem(problem: ProblemDef, domain: DomainDef) -> None:
    """Raise the first violation of ``problem`` against ``domain``."""
    known_types = domain.type_names()
    types: dict[str, str] = {}
    for obj, type_name in problem.objects:
        if type_name not in known_types:
            raise UnknownType(type_name)
        if obj in types:
            raise PDDLSyntaxError(f"object {obj!r} declared twice")
        types[obj] = type_name
    for atom in sorted(problem.init):
        errors: list[PDDLError] = []
        if any(is_variable(a) for a in atom.args):
            raise PDDLSyntaxError(f"variable in init atom {atom}")
        _check_literal(Literal(atom.predicate, atom.args), domain, {}, types,
                       errors)
        if errors:
            raise errors[0]
    errors = validate_goal(problem.goal, domain, types)
    if errors:
        raise errors[0]


# ---------------------------------------------------------------------------
# printing

def _conj_str(lits: Sequence[Literal], indent: str) -> str:
    if not lits:
        return "(and)"
    inner = f"\n{indent}  ".join(str(lit) for lit in lits)
    return f"(and {inner})"


def _params_str(params: Sequence[TypedVar]) -> str:
    return "(" + " ".join(str(p) for p in params) + ")"


def print_domain(domain: DomainDef) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append("  (:requirements " + " ".join(domain.requirements) + ")")
    if domain.types:
        lines.append("  (:types")
        lines.extend(f"    {name} - {parent}" for name, parent in domain.types)
        lines.append("  )")
    lines.append("  (:predicates")
    for decl in domain.predicates:
        params = "".join(f" {p}" for p in decl.params)
        lines.append(f"    ({decl.name}{params})")
    lines.append("  )")
    for action in domain.actions:
        effects = [*action.add_effects, *(l.negate() for l in action.del_effects)]
        lines.append(f"  (:action {action.name}")
        lines.append(f"    :parameters {_params_str(action.params)}")
        lines.append(
            f"    :precondition {_conj_str(action.preconditions, ' ' * 18)}")
        lines.append(f"    :effect {_conj_str(effects, ' ' * 12)}")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def print_goal(goal: GoalFormula) -> str:
    body = _conj_str(goal.body, "    ")
    if goal.binder:
        return f"(:goal\n  (exists {_params_str(goal.binder)}\n    {body}))"
    return f"(:goal\n  {body})"


def print_problem(problem: ProblemDef) -> str:
    lines = [f"(define (problem {problem.name})",
             f"  (:domain {problem.domain_name})",
             "  (:objects"]
    lines.extend(f"    {name} - {type_name}"
                 for name, type_name in problem.objects)
    lines.append("  )")
    lines.append("  (:init")
    lines.extend(f"    {atom}" for atom in sorted(problem.init))
    lines.append("  )")
    lines.append("  " + print_goal(problem.goal).replace("\n", "\n  "))
    lines.append(")")
    return "\n".join(lines) + "\n"
