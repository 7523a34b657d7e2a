"""Magma terms and equations: parsing, printing, canonical form, conjugation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

__all__ = [
    "Var", "App", "Term", "Equation", "ParseError",
    "parse_term", "parse_equation", "print_term", "canonicalize",
    "mirror", "conjugate", "metrics", "op_count", "variables",
    "relabel", "term_key", "var_name",
]

ALPHABET = ("x", "y", "z", "w", "u", "v")
# Letters outside ALPHABET get stable indices starting here, so parsed terms
# stay deterministic; canonicalize() relabels them densely anyway.
_EXTRA_BASE = 100
_OP_SYMBOLS = "*⋄◇♢"  # * ⋄ ◇ ♢


@dataclass(frozen=True, slots=True)
class Var:
    index: int

    def __str__(self):
        return var_name(self.index)


@dataclass(frozen=True, slots=True)
class App:
    left: "Term"
    right: "Term"

    def __str__(self):
        return print_term(self)


Term = Union[Var, App]


class ParseError(ValueError):
    """Syntax error in a term or equation, with the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def var_name(index: int) -> str:
    if index < len(ALPHABET):
        return ALPHABET[index]
    return f"x{index}"


def _name_index(name: str) -> int:
    if name in ALPHABET:
        return ALPHABET.index(name)
    if len(name) > 1:
        return int(name[1:])
    return _EXTRA_BASE + ord(name) - ord("a")


# ---------------------------------------------------------------- parsing

def _tokenize(text: str):
    toks = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            toks.append((c, c, i))
            i += 1
        elif c in _OP_SYMBOLS:
            toks.append(("*", c, i))
            i += 1
        elif c.isascii() and c.isalpha():
            j = i + 1
            if c == "x":
                while j < len(text) and text[j].isdigit():
                    j += 1
            toks.append(("var", text[i:j], i))
            i = j
        else:
            raise ParseError(f"unexpected character {c!r}", len(text[:i].encode()))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0

    def offset(self) -> int:
        if self.pos < len(self.toks):
            char_off = self.toks[self.pos][2]
        else:
            char_off = len(self.text)
        return len(self.text[:char_off].encode())

    def peek(self):
        return self.toks[self.pos][0] if self.pos < len(self.toks) else None

    def expr(self) -> Term:
        left = self.atom()
        if self.peek() != "*":
            return left
        self.pos += 1
        right = self.atom()
        if self.peek() == "*":
            raise ParseError("ambiguous application, parenthesize nested products",
                             self.offset())
        return App(left, right)

    def atom(self) -> Term:
        kind = self.peek()
        if kind == "var":
            name = self.toks[self.pos][1]
            self.pos += 1
            return Var(_name_index(name))
        if kind == "(":
            self.pos += 1
            t = self.expr()
            if self.peek() != ")":
                raise ParseError("unbalanced parentheses, expected ')'", self.offset())
            self.pos += 1
            return t
        if kind is None:
            raise ParseError("missing operand", self.offset())
        raise ParseError(f"missing operand before {self.toks[self.pos][1]!r}",
                         self.offset())


def parse_term(text: str) -> Term:
    """Parse a fully parenthesized magma term such as ``x * (y * z)``.

    Variables are ``x, y, z, w, u, v`` (indices 0..5) or ``x<k>``.  Only the
    top-level application may omit its parentheses.
    """
    p = _Parser(text)
    t = p.expr()
    if p.pos != len(p.toks):
        tok = p.toks[p.pos][0]
        msg = "unbalanced parentheses" if tok == ")" else "unexpected token"
        raise ParseError(msg, p.offset())
    return t


def parse_equation(text: str) -> "Equation":
    """Parse ``LHS = RHS`` and return the canonical equation."""
    if text.count("=") != 1:
        off = text.find("=", text.find("=") + 1) if "=" in text else len(text)
        raise ParseError("expected exactly one '='", len(text[:off].encode()))
    lhs_text, rhs_text = text.split("=")
    lhs = parse_term(lhs_text)
    try:
        rhs = parse_term(rhs_text)
    except ParseError as exc:
        shift = len(lhs_text.encode()) + 1
        raise ParseError(str(exc).rsplit(" at offset", 1)[0], exc.offset + shift) from None
    return canonicalize(lhs, rhs)


def print_term(t: Term, top: bool = True) -> str:
    if isinstance(t, Var):
        return var_name(t.index)
    s = f"{print_term(t.left, False)} * {print_term(t.right, False)}"
    return s if top else f"({s})"


# ------------------------------------------------------- structural helpers

def op_count(t: Term) -> int:
    if isinstance(t, Var):
        return 0
    return 1 + op_count(t.left) + op_count(t.right)


def _preorder(t: Term, out: list) -> None:
    if isinstance(t, Var):
        out.append(t.index)
    else:
        out.append(-1)
        _preorder(t.left, out)
        _preorder(t.right, out)


def variables(t: Term) -> list[int]:
    """Variable indices in order of first occurrence (left to right)."""
    seq: list[int] = []
    _preorder(t, seq)
    seen: dict[int, None] = {}
    for i in seq:
        if i >= 0:
            seen.setdefault(i)
    return list(seen)


def relabel(t: Term, mapping: dict[int, int]) -> Term:
    if isinstance(t, Var):
        return Var(mapping[t.index])
    return App(relabel(t.left, mapping), relabel(t.right, mapping))


def term_key(t: Term) -> tuple:
    """Preorder tokens with variables renamed by first-occurrence rank."""
    seq: list[int] = []
    _preorder(t, seq)
    rank: dict[int, int] = {}
    return tuple(-1 if i < 0 else rank.setdefault(i, len(rank)) for i in seq)


def mirror(t: Term) -> Term:
    if isinstance(t, Var):
        return t
    return App(mirror(t.right), mirror(t.left))


# ---------------------------------------------------------------- equations

@dataclass(frozen=True, slots=True)
class Equation:
    """A canonical magma law ``lhs = rhs``.  Build it with :func:`canonicalize`."""

    lhs: Term
    rhs: Term

    @property
    def signature(self) -> tuple[int, int]:
        return (op_count(self.lhs), op_count(self.rhs))

    @property
    def num_vars(self) -> int:
        return len(set(variables(self.lhs)) | set(variables(self.rhs)))

    @property
    def op_total(self) -> int:
        a, b = self.signature
        return a + b

    def sort_key(self) -> tuple:
        seq: list[int] = []
        _preorder(self.lhs, seq)
        seq.append(-2)
        _preorder(self.rhs, seq)
        return (self.op_total, self.signature, tuple(seq))

    def __str__(self):
        return f"{print_term(self.lhs)} = {print_term(self.rhs)}"

    def __lt__(self, other: "Equation"):
        return self.sort_key() < other.sort_key()


def _dense(lhs: Term, rhs: Term) -> tuple[Term, Term]:
    order = variables(lhs) + variables(rhs)
    mapping: dict[int, int] = {}
    for i in order:
        mapping.setdefault(i, len(mapping))
    return relabel(lhs, mapping), relabel(rhs, mapping)


def canonicalize(lhs: Term, rhs: Term) -> Equation:
    """Canonical representative of ``lhs = rhs`` up to renaming and symmetry.

    The smaller side (by op count, then renamed preorder key) goes left; on a
    tie both orientations are relabeled and the smaller full key wins.
    """
    kl = (op_count(lhs), term_key(lhs))
    kr = (op_count(rhs), term_key(rhs))
    if kl < kr:
        cands = [(lhs, rhs)]
    elif kr < kl:
        cands = [(rhs, lhs)]
    else:
        cands = [(lhs, rhs), (rhs, lhs)]
    eqs = [Equation(*_dense(a, b)) for a, b in cands]
    return min(eqs, key=Equation.sort_key)


def conjugate(e: Equation) -> Equation:
    """Mirror every application on both sides, then canonicalize."""
    return canonicalize(mirror(e.lhs), mirror(e.rhs))


def metrics(e: Equation) -> tuple[tuple[int, int], int, int]:
    """Return ``(signature, num_vars, op_total)``."""
    return e.signature, e.num_vars, e.op_total
