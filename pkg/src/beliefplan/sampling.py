"""Draw concrete completions of the belief set, one choice per slot."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from beliefplan.alfred import IN_RECEPTACLE
from beliefplan.backend import ChatBackend, ChatRequest
from beliefplan.belief import BeliefSet, WorldModel
from beliefplan.grounding import GroundGoal, goal_satisfied
from beliefplan.pddl import Atom

STRATEGIES = ("random", "oracle", "llm")
MAX_ORACLE_ASSIGNMENTS = 64

Assignment = frozenset  # frozenset[Atom], one candidate per slot


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "random"
    n_samples: int = 3
    seed: int = 0
    fallback_to_random: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass
class SampleContext:
    """Per-call inputs beyond W and B.

    ``round_index`` separates the random streams of successive planning
    rounds and ``stream`` separates a round's fallback draw from its first
    draw; ``env`` is only read by the oracle strategy.
    """
    round_index: int = 0
    stream: int = 0
    backend: ChatBackend | None = None
    env: object | None = None
    llm_fallbacks: int = 0


def sample_rng(seed: int, round_index: int, sample_index: int,
               stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        seed, spawn_key=(stream, round_index, sample_index)))


def sample(w: WorldModel, b: BeliefSet, cfg: SamplerConfig,
           context: SampleContext | None = None) -> list[Assignment]:
    context = context or SampleContext()
    if not b.slots:
        return [frozenset() for _ in range(cfg.n_samples)]
    if cfg.strategy == "random":
        return [_random_assignment(b, sample_rng(cfg.seed, context.round_index,
                                                 i, context.stream))
                for i in range(cfg.n_samples)]
    if cfg.strategy == "oracle":
        return _oracle_assignments(w, b, context)
    return [_llm_assignment(w, b, cfg, context, i)
            for i in range(cfg.n_samples)]


def _random_assignment(b: BeliefSet, rng: np.random.Generator) -> Assignment:
    return frozenset(cands[int(rng.integers(len(cands)))]
                     for _, cands in b.ordered())


# -- oracle -----------------------------------------------------------------

def _oracle_assignments(w: WorldModel, b: BeliefSet,
                        context: SampleContext) -> list[Assignment]:
    """Every placement consistent with the hidden ground truth.

    Hypothetical objects could stand for any unseen real object of their
    type, so each injective matching yields one assignment.
    """
    env = context.env
    if env is None:
        raise ValueError("the oracle strategy needs the environment")
    truth = env.oracle_state()
    true_loc = {a.args[0]: a.args[1] for a in truth
                if a.predicate == IN_RECEPTACLE}
    real_types = {o.name: o.type_name for o in env.spec.objects}
    groups: dict[str, list[tuple[str, frozenset[Atom]]]] = {}
    fixed: list[Atom] = []
    for (name, _), cands in b.ordered():
        info = w.objects[name]
        if info.hypothetical:
            groups.setdefault(info.type_name, []).append((name, frozenset(cands)))
        else:
            atom = Atom(IN_RECEPTACLE, (name, true_loc.get(name, "")))
            fixed.append(atom if atom in cands else sorted(cands)[0])
    per_group = []
    for type_name, hyps in sorted(groups.items()):
        pool = sorted(o for o, t in real_types.items()
                      if t == type_name and o not in w.objects
                      and o in true_loc)
        # Placeholders with identical candidates are interchangeable.
        symmetric = len({c for _, c in hyps}) == 1
        matchings = (itertools.combinations if symmetric
                     else itertools.permutations)(pool, len(hyps))
        options = []
        for chosen in matchings:
            atoms = []
            for (hyp, cands), real in zip(hyps, chosen):
                atom = Atom(IN_RECEPTACLE, (hyp, true_loc[real]))
                if atom not in cands:
                    break
                atoms.append(atom)
            else:
                options.append(frozenset(atoms))
        if not options:
            # No consistent matching: the goal names objects that do not
            # exist, so any completion is as good as another.
            options = [frozenset(sorted(c)[0] for _, c in hyps)]
        per_group.append(list(dict.fromkeys(options)))
    out = []
    for combo in itertools.product(*per_group):
        out.append(frozenset(fixed).union(*combo))
        if len(out) >= MAX_ORACLE_ASSIGNMENTS:
            break
    return out


# -- language model -----------------------------------------------------------

def slot_prompt(w: WorldModel, name: str, options: Sequence[str],
                sample_index: int) -> str:
    facts = "\n".join(str(a) for a in sorted(w.known_true))
    type_name = w.objects[name].type_name
    return (
        "Known facts:\n"
        f"{facts}\n\n"
        f"Sample {sample_index + 1}.\n"
        f"Where is the {type_name} {name}? "
        f"Complete the predicate ({IN_RECEPTACLE} {name} ?x).\n"
        f"Options: {', '.join(options)}\n"
        "Answer with one option.")


def parse_choice(reply: str, options: Sequence[str]) -> str | None:
    """The option whose name appears earliest in ``reply`` (longest wins at
    the same position)."""
    best = None
    for opt in options:
        m = re.search(r"(?<![\w-])" + re.escape(opt) + r"(?![\w-])", reply)
        if m is None:
            continue
        key = (m.start(), -len(opt))
        if best is None or key < best[0]:
            best = (key, opt)
    return best[1] if best else None


def _llm_assignment(w: WorldModel, b: BeliefSet, cfg: SamplerConfig,
                    context: SampleContext, index: int) -> Assignment:
    if context.backend is None:
        raise ValueError("the llm strategy needs a backend")
    rng = sample_rng(cfg.seed, context.round_index, index, context.stream)
    chosen = []
    for (name, _), cands in b.ordered():
        options = [a.args[1] for a in cands]
        request = ChatRequest.of(
            ("user", slot_prompt(w, name, options, index)), temperature=0.0,
            max_tokens=16)
        reply = context.backend.complete(request).content
        pick = parse_choice(reply, options)
        if pick is None:
            context.llm_fallbacks += 1
            chosen.append(cands[int(rng.integers(len(cands)))])
        else:
            chosen.append(Atom(IN_RECEPTACLE, (name, pick)))
    return frozenset(chosen)


# -- screening ------------------------------------------------------------------

def dedupe_and_screen(assignments: Sequence[Assignment], w: WorldModel,
                      goal: GroundGoal) -> tuple[list[Assignment], bool]:
    """Drop duplicate assignments (keeping first occurrences) and report
    whether every sampled world already satisfies the goal."""
    usable = list(dict.fromkeys(assignments))
    known = frozenset(w.known_true)
    worlds = usable or [frozenset()]
    all_satisfied = all(goal_satisfied(known | a, goal) for a in worlds)
    return usable, all_satisfied
