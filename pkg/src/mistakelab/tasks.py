"""Deterministic solvers, answer extraction, and exact-match correctness.

Question parsers target the phrasing of the shipped question corpus; any
other phrasing is a hard error (a silent misparse would corrupt
correctness labels downstream).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import QuestionParseError, SolverError
from .model import TaskKind

# Answer detection regex. A match means the step states a final answer.
ANSWER_RE = re.compile(r"(?<=[Tt]he answer is).*$")

BRACKET_PAIRS = {"(": ")", "[": "]", "{": "}", "<": ">"}
CLOSERS = {v: k for k, v in BRACKET_PAIRS.items()}

_ORDINALS = {
    "first": 1, "second": 2, "third": 3, "fourth": 4,
    "fifth": 5, "sixth": 6, "seventh": 7,
}


def _trim_answer(text: str) -> str:
    text = text.strip()
    if text.endswith("."):
        text = text[:-1].strip()
    return text


def extract_answer(step_text: str) -> str | None:
    """Return the stated answer in a step, or None if the step states none.

    The capture is trimmed of surrounding whitespace and one trailing period.
    """
    match = ANSWER_RE.search(step_text)
    if match is None:
        return None
    return _trim_answer(match.group(0))


def extract_trace_answer(steps: Sequence[str]) -> str | None:
    """Answer stated by a whole trace: the match in the final matching step."""
    for step in reversed(steps):
        answer = extract_answer(step)
        if answer is not None:
            return answer
    return None


def is_correct_ans(answer: str | None, target: str) -> bool:
    """Exact match after the answer trim rule. No case folding or reordering."""
    if answer is None:
        return False
    return _trim_answer(answer) == _trim_answer(target)


@dataclass(frozen=True)
class TaskInstance:
    task: TaskKind
    question: str
    payload: object


# --- word sorting -----------------------------------------------------------

_WORDS_RE = re.compile(r"List:\s*(.+?)\s*$")


def _parse_word_sorting(question: str) -> list[str]:
    match = _WORDS_RE.search(question)
    if match is None:
        raise QuestionParseError(f"word sorting question has no 'List:' clause: {question!r}")
    words = match.group(1).split()
    if not words:
        raise QuestionParseError(f"word sorting question has an empty list: {question!r}")
    return words


# --- tracking shuffled objects ----------------------------------------------

# search, not match: the first clause carries an intro ("... an item: Alice has the X")
_ASSIGN_RE = re.compile(r"(\w+) has the (.+)$")
_SWAP_RE = re.compile(r"^(?:First|Then|Next|Finally), (\w+) and (\w+) swap items$")
_QUERY_RE = re.compile(r"what does (\w+) have\?$")


@dataclass(frozen=True)
class TrackingPayload:
    holdings: tuple[tuple[str, str], ...]  # (name, item) initial assignment
    swaps: tuple[tuple[str, str], ...]
    query: str


def _parse_tracking(question: str) -> TrackingPayload:
    query_match = _QUERY_RE.search(question)
    if query_match is None:
        raise QuestionParseError(f"tracking question has no 'what does X have?' query: {question!r}")
    sentences = [s.strip() for s in question.split(".") if s.strip()]
    holdings: list[tuple[str, str]] = []
    swaps: list[tuple[str, str]] = []
    for sentence in sentences:
        if " has the " in sentence and not holdings:
            # drop any intro before a colon ("... they each have an item: Alice has ...")
            if ":" in sentence:
                sentence = sentence.split(":", 1)[1]
            parts = re.split(r",\s*(?:and\s+)?", sentence)
            for part in parts:
                m = _ASSIGN_RE.search(part.strip())
                if m is None:
                    raise QuestionParseError(f"bad assignment clause {part!r} in {question!r}")
                holdings.append((m.group(1), m.group(2)))
            continue
        m = _SWAP_RE.match(sentence)
        if m is not None:
            swaps.append((m.group(1), m.group(2)))
    if not holdings:
        raise QuestionParseError(f"tracking question has no initial assignment: {question!r}")
    names = {name for name, _ in holdings}
    query = query_match.group(1)
    for a, b in swaps:
        if a not in names or b not in names:
            raise QuestionParseError(f"swap references unknown name in {question!r}")
    if query not in names:
        raise QuestionParseError(f"query references unknown name {query!r} in {question!r}")
    return TrackingPayload(tuple(holdings), tuple(swaps), query)


# --- logical deduction -------------------------------------------------------

_OBJECTS_RE = re.compile(r"arranged in a row:\s*(.+?)\.")


@dataclass(frozen=True)
class OrderingConstraint:
    kind: str  # left_of | right_of | immediately_left_of | position | far_left | far_right
    subject: str
    other: str | None = None
    position: int | None = None  # 1-based from the left

    def holds(self, order: Sequence[str]) -> bool:
        i = order.index(self.subject)
        if self.kind == "far_left":
            return i == 0
        if self.kind == "far_right":
            return i == len(order) - 1
        if self.kind == "position":
            return i == self.position - 1
        j = order.index(self.other)
        if self.kind == "left_of":
            return i < j
        if self.kind == "right_of":
            return i > j
        if self.kind == "immediately_left_of":
            return j == i + 1
        raise AssertionError(f"unknown constraint kind {self.kind}")


@dataclass(frozen=True)
class DeductionPayload:
    objects: tuple[str, ...]
    constraints: tuple[OrderingConstraint, ...]


def _strip_the(phrase: str) -> str:
    phrase = phrase.strip()
    return phrase[4:] if phrase[:4].lower() == "the " else phrase


def _parse_deduction_constraint(sentence: str, objects: set[str]) -> OrderingConstraint | None:
    def obj(phrase: str) -> str:
        name = _strip_the(phrase)
        if name not in objects:
            raise QuestionParseError(f"constraint references unknown object {name!r}: {sentence!r}")
        return name

    m = re.match(r"^(.*?) is immediately to the left of (.+)$", sentence)
    if m:
        return OrderingConstraint("immediately_left_of", obj(m.group(1)), obj(m.group(2)))
    m = re.match(r"^(.*?) is immediately to the right of (.+)$", sentence)
    if m:
        return OrderingConstraint("immediately_left_of", obj(m.group(2)), obj(m.group(1)))
    m = re.match(r"^(.*?) is to the left of (.+)$", sentence)
    if m:
        return OrderingConstraint("left_of", obj(m.group(1)), obj(m.group(2)))
    m = re.match(r"^(.*?) is to the right of (.+)$", sentence)
    if m:
        return OrderingConstraint("right_of", obj(m.group(1)), obj(m.group(2)))
    m = re.match(r"^(.*?) is on the far (left|right)$", sentence)
    if m:
        return OrderingConstraint(f"far_{m.group(2)}", obj(m.group(1)))
    m = re.match(r"^(.*?) is (\w+) from the (left|right)$", sentence)
    if m:
        if m.group(2) not in _ORDINALS:
            raise QuestionParseError(f"unknown ordinal {m.group(2)!r}: {sentence!r}")
        k = _ORDINALS[m.group(2)]
        if m.group(3) == "right":
            return OrderingConstraint("position", obj(m.group(1)), position=-k)  # resolved later
        return OrderingConstraint("position", obj(m.group(1)), position=k)
    return None


def _parse_deduction(question: str) -> DeductionPayload:
    match = _OBJECTS_RE.search(question)
    if match is None:
        raise QuestionParseError(f"deduction question has no 'arranged in a row:' clause: {question!r}")
    names = [_strip_the(p) for p in re.split(r",\s*(?:and\s+)?", match.group(1)) if p.strip()]
    if len(names) < 2:
        raise QuestionParseError(f"deduction question lists fewer than 2 objects: {question!r}")
    objects = set(names)
    rest = question[match.end():]
    constraints: list[OrderingConstraint] = []
    for sentence in (s.strip() for s in rest.split(".")):
        if not sentence or sentence.startswith("What is the order"):
            continue
        constraint = _parse_deduction_constraint(sentence, objects)
        if constraint is None:
            raise QuestionParseError(f"unrecognized constraint sentence {sentence!r}")
        if constraint.kind == "position" and constraint.position < 0:
            constraint = OrderingConstraint(
                "position", constraint.subject, position=len(names) + 1 + constraint.position
            )
        constraints.append(constraint)
    return DeductionPayload(tuple(names), tuple(constraints))


# --- multistep arithmetic ----------------------------------------------------

_EXPR_CHARS_RE = re.compile(r"^[\d\s()+\-*]+$")


def _parse_arithmetic(question: str) -> str:
    expr = question.strip()
    expr = re.sub(r"=\s*$", "", expr).strip()
    if not expr or not _EXPR_CHARS_RE.match(expr):
        raise QuestionParseError(f"arithmetic question is not a bare integer expression: {question!r}")
    return expr


class _ExprParser:
    """Recursive-descent evaluator over +, -, *, unary minus, parentheses.

    Exact integer arithmetic throughout.
    """

    def __init__(self, text: str):
        self.tokens = re.findall(r"\d+|[()+\-*]", text)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            raise QuestionParseError("unexpected end of expression")
        self.pos += 1
        return token

    def parse(self) -> int:
        value = self.expr()
        if self.peek() is not None:
            raise QuestionParseError(f"trailing tokens at {self.peek()!r}")
        return value

    def expr(self) -> int:
        value = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> int:
        value = self.factor()
        while self.peek() == "*":
            self.take()
            value = value * self.factor()
        return value

    def factor(self) -> int:
        token = self.take()
        if token == "-":
            return -self.factor()
        if token == "(":
            value = self.expr()
            if self.take() != ")":
                raise QuestionParseError("unbalanced parenthesis in expression")
            return value
        if token.isdigit():
            return int(token)
        raise QuestionParseError(f"unexpected token {token!r} in expression")


# --- Dyck languages ----------------------------------------------------------

_DYCK_INPUT_RE = re.compile(r"Input:\s*(.+?)\s*$")


def parse_dyck_prefix(question: str) -> list[str]:
    match = _DYCK_INPUT_RE.search(question)
    if match is None:
        raise QuestionParseError(f"Dyck question has no 'Input:' clause: {question!r}")
    symbols = match.group(1).split()
    for symbol in symbols:
        if symbol not in BRACKET_PAIRS and symbol not in CLOSERS:
            raise QuestionParseError(f"unknown bracket symbol {symbol!r} in {question!r}")
    return symbols


def dyck_closing_sequence(symbols: Sequence[str]) -> list[str]:
    """Minimal closing sequence balancing the prefix. Stack semantics."""
    stack: list[str] = []
    for i, symbol in enumerate(symbols, 1):
        if symbol in BRACKET_PAIRS:
            stack.append(symbol)
        else:
            if not stack or BRACKET_PAIRS[stack[-1]] != symbol:
                raise SolverError(f"close-before-open violation at symbol {i} ({symbol!r})")
            stack.pop()
    return [BRACKET_PAIRS[s] for s in reversed(stack)]


def is_balanced(symbols: Sequence[str]) -> bool:
    try:
        return not dyck_closing_sequence(symbols)
    except SolverError:
        return False


# --- public API ---------------------------------------------------------------

def parse_question(task: TaskKind, question: str) -> TaskInstance:
    if task is TaskKind.WORD_SORTING:
        payload = _parse_word_sorting(question)
    elif task is TaskKind.TRACKING_SHUFFLED_OBJECTS:
        payload = _parse_tracking(question)
    elif task is TaskKind.LOGICAL_DEDUCTION:
        payload = _parse_deduction(question)
    elif task is TaskKind.MULTISTEP_ARITHMETIC:
        payload = _parse_arithmetic(question)
    elif task is TaskKind.DYCK_LANGUAGES:
        payload = parse_dyck_prefix(question)
    else:  # pragma: no cover - closed enum
        raise QuestionParseError(f"unsupported task {task}")
    return TaskInstance(task=task, question=question, payload=payload)


def solve(instance: TaskInstance) -> str:
    """Ground-truth answer for a parsed task instance."""
    if instance.task is TaskKind.WORD_SORTING:
        return " ".join(sorted(instance.payload))
    if instance.task is TaskKind.TRACKING_SHUFFLED_OBJECTS:
        payload: TrackingPayload = instance.payload
        holdings = dict(payload.holdings)
        for a, b in payload.swaps:
            holdings[a], holdings[b] = holdings[b], holdings[a]
        return holdings[payload.query]
    if instance.task is TaskKind.LOGICAL_DEDUCTION:
        deduction: DeductionPayload = instance.payload
        solutions = [
            order
            for order in itertools.permutations(deduction.objects)
            if all(c.holds(order) for c in deduction.constraints)
        ]
        if len(solutions) == 0:
            raise SolverError(f"no ordering satisfies the constraints: {instance.question!r}")
        if len(solutions) > 1:
            raise SolverError(f"{len(solutions)} orderings satisfy the constraints: {instance.question!r}")
        return ", ".join(solutions[0])
    if instance.task is TaskKind.MULTISTEP_ARITHMETIC:
        return str(_ExprParser(instance.payload).parse())
    if instance.task is TaskKind.DYCK_LANGUAGES:
        return " ".join(dyck_closing_sequence(instance.payload))
    raise SolverError(f"unsupported task {instance.task}")  # pragma: no cover


def solve_question(task: TaskKind, question: str) -> str:
    return solve(parse_question(task, question))
