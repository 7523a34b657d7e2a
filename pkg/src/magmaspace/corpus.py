"""Enumeration of the corpus of magma laws with a bounded number of operations."""
from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from .terms import App, Equation, ParseError, Term, Var, canonicalize, conjugate, parse_equation

log = logging.getLogger(__name__)

MAX_OPS_LIMIT = 6


class CorpusError(ValueError):
    pass


@dataclass
class Corpus:
    equations: list[Equation]
    index_of: dict[Equation, int] = field(default_factory=dict)
    et_numbering: dict[int, int] = field(default_factory=dict)
    max_ops: int | None = None

    def __post_init__(self):
        if not self.index_of:
            self.index_of = {e: i for i, e in enumerate(self.equations)}

    def __len__(self):
        return len(self.equations)

    def __iter__(self):
        return iter(self.equations)

    def __getitem__(self, i: int) -> Equation:
        return self.equations[i]

    def index(self, e: Equation) -> int:
        return self.index_of[e]

    def signature_histogram(self) -> dict[tuple[int, int], int]:
        return dict(Counter(e.signature for e in self.equations))

    def conjugate_index(self) -> list[int]:
        """Position of each member's conjugate."""
        return [self.index_of[conjugate(e)] for e in self.equations]

    def et_index(self, et_number: int) -> int:
        for k, v in self.et_numbering.items():
            if v == et_number:
                return k
        raise KeyError(et_number)

    def to_text(self) -> str:
        return "".join(f"{e}\n" for e in self.equations)

    def write(self, path: str | Path, header: str = "") -> None:
        with open(path, "w") as fh:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
            fh.write(self.to_text())

    @classmethod
    def read(cls, path: str | Path) -> "Corpus":
        eqs = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                eqs.append(parse_equation(line))
            except ParseError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
        return cls(eqs)


@lru_cache(maxsize=None)
def _shapes(k: int) -> tuple[Term, ...]:
    """All binary trees with ``k`` internal nodes; leaves are Var(0) placeholders."""
    if k == 0:
        return (Var(0),)
    out = []
    for i in range(k):
        for left in _shapes(i):
            for right in _shapes(k - 1 - i):
                out.append(App(left, right))
    return tuple(out)


def _restricted_growth(n: int):
    """Set partitions of n leaves as restricted growth strings."""
    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(top + 2):
            prefix.append(v)
            yield from rec(prefix, max(top, v))
            prefix.pop()
    if n == 0:
        yield ()
    else:
        yield from rec([0], 0)


def _fill(t: Term, labels, pos: list[int]) -> Term:
    if isinstance(t, Var):
        v = Var(labels[pos[0]])
        pos[0] += 1
        return v
    left = _fill(t.left, labels, pos)
    return App(left, _fill(t.right, labels, pos))


def enumerate_corpus(max_ops: int = 4) -> Corpus:
    """All laws with at most ``max_ops`` operations, deduplicated and sorted."""
    if not 0 <= max_ops <= MAX_OPS_LIMIT:
        raise CorpusError(f"max_ops must be in 0..{MAX_OPS_LIMIT}, got {max_ops}")
    seen: set[Equation] = set()
    for total in range(max_ops + 1):
        for a in range(total // 2 + 1):
            b = total - a
            nleaves = a + b + 2
            for ls in _shapes(a):
                for rs in _shapes(b):
                    for labels in _restricted_growth(nleaves):
                        pos = [0]
                        lhs = _fill(ls, labels, pos)
                        rhs = _fill(rs, labels, pos)
                        # t = t is a tautology equivalent to x = x; only x = x is kept
                        if lhs == rhs and total > 0:
                            continue
                        seen.add(canonicalize(lhs, rhs))
    eqs = sorted(seen, key=Equation.sort_key)
    log.info("enumerated %d equations with max_ops=%d", len(eqs), max_ops)
    return Corpus(eqs, max_ops=max_ops)


def self_conjugate_count(c: Corpus) -> int:
    return sum(1 for e in c.equations if conjugate(e) == e)


_MAP_LINE = re.compile(r"^(?P<eq>.+?)\s*(?:↔|<->|\t)\s*(?P<num>\d+)\s*$")


def load_et_numbering(c: Corpus, path: str | Path) -> Corpus:
    """Attach ET equation numbers read from ``equation ↔ number`` lines.

    Returns a new corpus; lines whose equation is not in the corpus raise.
    """
    mapping: dict[int, int] = {}
    used: dict[int, int] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _MAP_LINE.match(line)
        if not m:
            raise CorpusError(f"{path}:{lineno}: malformed mapping line")
        try:
            eq = parse_equation(m["eq"])
        except ParseError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if eq not in c.index_of:
            raise CorpusError(f"{path}:{lineno}: equation {eq} not in corpus")
        num = int(m["num"])
        if num in used:
            raise CorpusError(f"{path}:{lineno}: duplicate ET number {num}")
        used[num] = lineno
        mapping[c.index_of[eq]] = num
    missing = len(c) - len(mapping)
    if mapping and missing:
        log.warning("%d corpus equations have no ET number", missing)
    return Corpus(list(c.equations), dict(c.index_of), {**c.et_numbering, **mapping}, c.max_ops)
