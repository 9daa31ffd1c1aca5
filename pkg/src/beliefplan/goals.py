"""Translate a natural-language task into a validated goal formula.

The prompt is fixed for a whole run: the domain's predicate block as the
system message, three worked examples as alternating user/assistant turns,
then the task line.
"""
from __future__ import annotations

import functools
import re

from beliefplan import alfred
from beliefplan.backend import ChatBackend, ChatRequest, Fixture, Message
from beliefplan.pddl import (DomainDef, GoalFormula, PDDLError, parse_goal,
                             print_goal, validate_goal)

TASK_PREFIX = "Your task is to: "

__all__ = ["TranslationFailed", "translate_goal", "validate_goal",
           "build_prompt", "extract_goal", "household_fixtures"]


class TranslationFailed(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


def _few_shot_pairs() -> tuple[tuple[str, str], ...]:
    pairs = []
    for block in alfred.few_shot_text().strip().split("\n\n"):
        task, _, goal = block.partition("\n")
        pairs.append((task.strip(), goal.strip()))
    return tuple(pairs)


@functools.lru_cache(maxsize=None)
def prompt_prefix() -> tuple[Message, ...]:
    """System message plus the fixed worked examples."""
    messages = [Message("system", alfred.predicate_block())]
    for task, goal in _few_shot_pairs():
        messages.append(Message("user", task))
        messages.append(Message("assistant", goal))
    return tuple(messages)


def build_prompt(task: str) -> ChatRequest:
    task = task.strip()
    if not task.startswith(TASK_PREFIX):
        task = TASK_PREFIX + task
    return ChatRequest(prompt_prefix() + (Message("user", task),),
                       temperature=0.0, max_tokens=256)


_GOAL_START = re.compile(r"\(\s*:goal\b", re.IGNORECASE)


def extract_goal(reply: str) -> str:
    """Cut the first balanced ``(:goal ...)`` expression out of ``reply``."""
    m = _GOAL_START.search(reply)
    if m is None:
        raise ValueError("the reply contains no (:goal ...) expression")
    depth = 0
    for i in range(m.start(), len(reply)):
        if reply[i] == "(":
            depth += 1
        elif reply[i] == ")":
            depth -= 1
            if depth == 0:
                return reply[m.start():i + 1]
    raise ValueError("the (:goal ...) expression is not closed")


def translate_goal(task: str, domain: DomainDef,
                   backend: ChatBackend) -> GoalFormula:
    """Ask ``backend`` for a goal; retry once with the error appended.

    Raises ``TranslationFailed`` after the second bad reply. Backend
    failures propagate unchanged.
    """
    request = build_prompt(task)
    error = ""
    for attempt in (1, 2):
        reply = backend.complete(request).content
        try:
            return parse_goal(extract_goal(reply), domain)
        except (PDDLError, ValueError) as exc:
            error = str(exc)
        request = ChatRequest(
            request.messages + (
                Message("assistant", reply),
                Message("user", f"That goal is invalid: {error}. Reply with "
                                "a corrected (:goal ...) only.")),
            request.temperature, request.max_tokens)
    raise TranslationFailed(f"no valid goal after 2 attempts: {error}", 2)


# -- scripted translations for the household task templates -------------------

_TEMPLATE_PATTERNS = (
    ("puttwo", re.compile(r"put two (\w+) (?:in|on) (\w+)")),
    ("clean", re.compile(r"put a clean (\w+) (?:in|on) (\w+)")),
    ("heat", re.compile(r"put a hot (\w+) (?:in|on) (\w+)")),
    ("cool", re.compile(r"put a cool (\w+) (?:in|on) (\w+)")),
    ("examine", re.compile(r"examine (?:the|an|a) (\w+) with the (\w+)")),
    ("put", re.compile(r"put some (\w+) (?:in|on) (\w+)")),
)


def template_goal(task: str) -> GoalFormula | None:
    """Exact goal for an instruction produced by the household templates."""
    from beliefplan.household import TaskSpec, task_goal
    task = task.strip()
    if task.startswith(TASK_PREFIX):
        task = task[len(TASK_PREFIX):]
    for family, pattern in _TEMPLATE_PATTERNS:
        m = pattern.match(task)
        if m:
            return task_goal(TaskSpec(family, m.group(1), m.group(2), task))
    return None


def _template_reply(request: ChatRequest) -> str:
    goal = template_goal(request.last_user())
    if goal is None:
        return "I am not sure how to express that task."
    return print_goal(goal)


def household_fixtures() -> list[Fixture]:
    """Fixtures answering every templated household instruction with its
    exact goal, the way a perfect translator would."""
    return [Fixture(TASK_PREFIX + "*", _template_reply)]
