"""Herbrand proofs between magma laws and a bounded rewriting checker.

A proof of ``target`` from ``source`` is a list of substitutions of the
source variables by terms over the target variables.  Each substituted
instance of the source is an equation over the target variables; the proof
checks when the target's two sides are joined by rewriting with those
instances in either direction.

By default target variables are rigid (they are the universally quantified
constants of the goal), so the instances act as ground rewrite rules.  With
``rigid=False`` instance variables are pattern variables, which is also
sound because every instance is itself a consequence of the source law.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .terms import (App, Equation, ParseError, Term, Var, canonicalize, parse_term,
                    print_term, var_name, variables)

DEFAULT_DEPTH = 8
DEFAULT_MAX_SIZE = 32


class HerbrandError(ValueError):
    pass


Pair = tuple[Term, Term]
Substitution = dict[int, Term]


def term_size(t: Term) -> int:
    if isinstance(t, Var):
        return 1
    return 1 + term_size(t.left) + term_size(t.right)


def substitute(t: Term, theta: Substitution) -> Term:
    if isinstance(t, Var):
        if t.index not in theta:
            raise HerbrandError(f"unbound variable {var_name(t.index)}")
        return theta[t.index]
    return App(substitute(t.left, theta), substitute(t.right, theta))


def _sides(e: Equation | Pair) -> Pair:
    return (e.lhs, e.rhs) if isinstance(e, Equation) else (e[0], e[1])


def _pair_vars(e: Pair) -> set[int]:
    return set(variables(e[0])) | set(variables(e[1]))


def apply_substitution(e: Equation | Pair, theta: Substitution) -> Pair:
    """Simultaneously replace the variables of ``e``; the result is not canonicalized."""
    lhs, rhs = _sides(e)
    return substitute(lhs, theta), substitute(rhs, theta)


def compose(sigma: Substitution, theta: Substitution) -> Substitution:
    """``sigma ∘ theta``: apply ``theta`` first, then ``sigma``."""
    return {v: substitute(t, sigma) for v, t in theta.items()}


def format_pair(p: Pair) -> str:
    return f"{print_term(p[0])} = {print_term(p[1])}"


def format_substitution(theta: Substitution) -> str:
    return ", ".join(f"{var_name(v)} -> {print_term(t)}" for v, t in sorted(theta.items()))


def parse_pair(text: str) -> Pair:
    """Parse ``LHS = RHS`` keeping the variable names as written."""
    if text.count("=") != 1:
        raise ParseError("expected exactly one '='", 0)
    a, b = text.split("=")
    return parse_term(a), parse_term(b)


def parse_substitution(text: str) -> Substitution:
    """Parse ``u -> x, v -> x*y`` (``↦`` and ``:`` are accepted as arrows)."""
    theta: Substitution = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        for arrow in ("->", "↦", ":"):
            if arrow in item:
                name, image = item.split(arrow, 1)
                break
        else:
            raise HerbrandError(f"malformed substitution item {item!r}")
        v = parse_term(name)
        if not isinstance(v, Var):
            raise HerbrandError(f"substitution source {name.strip()!r} is not a variable")
        theta[v.index] = parse_term(image)
    return theta


@dataclass(frozen=True)
class HerbrandProof:
    source: Pair
    target: Pair
    steps: tuple[tuple[tuple[int, Term], ...], ...]
    max_depth: int = DEFAULT_DEPTH
    max_size: int = DEFAULT_MAX_SIZE

    @classmethod
    def make(cls, source, target, steps, max_depth: int = DEFAULT_DEPTH,
             max_size: int = DEFAULT_MAX_SIZE) -> "HerbrandProof":
        src = parse_pair(source) if isinstance(source, str) else _sides(source)
        tgt = parse_pair(target) if isinstance(target, str) else _sides(target)
        subs = []
        for s in steps:
            theta = parse_substitution(s) if isinstance(s, str) else dict(s)
            subs.append(tuple(sorted(theta.items())))
        return cls(src, tgt, tuple(subs), max_depth, max_size)

    def substitutions(self) -> list[Substitution]:
        return [dict(s) for s in self.steps]

    def instances(self) -> list[Pair]:
        return [apply_substitution(self.source, th) for th in self.substitutions()]

    def validate(self) -> None:
        if not self.steps:
            raise HerbrandError("a proof needs at least one substitution")
        if self.max_depth <= 0 or self.max_size <= 0:
            raise HerbrandError("search limits must be positive")
        svars = _pair_vars(self.source)
        tvars = _pair_vars(self.target)
        for i, theta in enumerate(self.substitutions(), 1):
            missing = svars - theta.keys()
            if missing:
                raise HerbrandError(f"step {i} leaves {var_name(min(missing))} unbound")
            extra = theta.keys() - svars
            if extra:
                raise HerbrandError(f"step {i} binds {var_name(min(extra))}, not a source variable")
            for t in theta.values():
                stray = set(variables(t)) - tvars
                if stray:
                    raise HerbrandError(
                        f"step {i} uses {var_name(min(stray))}, not a target variable")


# ----------------------------------------------------------------- rewriting

@dataclass(frozen=True)
class Rewrite:
    rule: int           # index of the instance used
    forward: bool       # instance lhs -> rhs when true
    position: tuple[int, ...]   # path of 0 (left) / 1 (right) from the root
    before: Term
    after: Term

    def as_dict(self) -> dict:
        return {"rule": self.rule, "direction": "lhs->rhs" if self.forward else "rhs->lhs",
                "position": list(self.position), "before": print_term(self.before),
                "after": print_term(self.after)}


def subterm(t: Term, pos: tuple[int, ...]) -> Term:
    for p in pos:
        if not isinstance(t, App):
            raise HerbrandError(f"invalid position {pos}")
        t = t.right if p else t.left
    return t


def replace_at(t: Term, pos: tuple[int, ...], new: Term) -> Term:
    if not pos:
        return new
    if not isinstance(t, App):
        raise HerbrandError(f"invalid position {pos}")
    if pos[0]:
        return App(t.left, replace_at(t.right, pos[1:], new))
    return App(replace_at(t.left, pos[1:], new), t.right)


def positions(t: Term, prefix: tuple[int, ...] = ()):
    yield prefix, t
    if isinstance(t, App):
        yield from positions(t.left, prefix + (0,))
        yield from positions(t.right, prefix + (1,))


def match(pattern: Term, t: Term, binding: dict[int, Term]) -> bool:
    if isinstance(pattern, Var):
        bound = binding.get(pattern.index)
        if bound is None:
            binding[pattern.index] = t
            return True
        return bound == t
    if not isinstance(t, App):
        return False
    return match(pattern.left, t.left, binding) and match(pattern.right, t.right, binding)


class _Rules:
    def __init__(self, instances: list[Pair], rigid: bool):
        self.rigid = rigid
        self.directed: list[tuple[int, bool, Term, Term]] = []
        for i, (l, r) in enumerate(instances):
            for fwd, a, b in ((True, l, r), (False, r, l)):
                if not rigid and not set(variables(b)) <= set(variables(a)):
                    continue
                self.directed.append((i, fwd, a, b))

    def successors(self, t: Term):
        for pos, sub in positions(t):
            for i, fwd, a, b in self.directed:
                if self.rigid:
                    if sub == a:
                        yield Rewrite(i, fwd, pos, t, replace_at(t, pos, b))
                else:
                    binding: dict[int, Term] = {}
                    if match(a, sub, binding):
                        new = substitute(b, binding)
                        yield Rewrite(i, fwd, pos, t, replace_at(t, pos, new))


@dataclass
class Verdict:
    proved: bool
    trace: list[Rewrite] = field(default_factory=list)
    by_instance: int | None = None
    explored: int = 0

    @property
    def status(self) -> str:
        return "proved" if self.proved else "not-found-within-bounds"

    def as_dict(self) -> dict:
        return {"verdict": self.status, "by_instance": self.by_instance,
                "rewrites": len(self.trace), "explored": self.explored,
                "trace": [s.as_dict() for s in self.trace]}


def _flip(step: Rewrite) -> Rewrite:
    return Rewrite(step.rule, not step.forward, step.position, step.after, step.before)


def verify(p: HerbrandProof, rigid: bool = True) -> Verdict:
    """Bounded bidirectional breadth-first search joining the target's sides.

    ``max_depth`` bounds each side, so traces have at most ``2 * max_depth`` steps.

    ``proved`` comes with a replayable trace from target lhs to target rhs;
    failure within the depth and size bounds is not a refutation.
    """
    p.validate()
    inst = p.instances()
    lhs, rhs = p.target
    for i, (a, b) in enumerate(inst):
        if (a, b) == (lhs, rhs) or (b, a) == (lhs, rhs):
            return Verdict(True, [], by_instance=i)
    if lhs == rhs:
        return Verdict(True)
    rules = _Rules(inst, rigid)
    # parent maps: term -> step that reached it (None for the root)
    seen = ({lhs: None}, {rhs: None})
    frontiers = (deque([lhs]), deque([rhs]))
    depth = [0, 0]
    explored = 0

    def path(side: int, t: Term) -> list[Rewrite]:
        steps = []
        while seen[side][t] is not None:
            st = seen[side][t]
            steps.append(st)
            t = st.before
        return steps[::-1]

    while any(frontiers) and min(depth) < p.max_depth:
        side = 0 if (depth[0] <= depth[1] and frontiers[0]) or not frontiers[1] else 1
        if depth[side] >= p.max_depth:
            side = 1 - side
        nxt = deque()
        for t in frontiers[side]:
            for st in rules.successors(t):
                new = st.after
                if new in seen[side] or term_size(new) > p.max_size:
                    continue
                seen[side][new] = st
                explored += 1
                if new in seen[1 - side]:
                    fwd = path(side, new)
                    back = path(1 - side, new)
                    if side == 1:
                        fwd, back = back, fwd
                    trace = fwd + [_flip(s) for s in reversed(back)]
                    return Verdict(True, trace, explored=explored)
                nxt.append(new)
        frontiers[side].clear()
        frontiers[side].extend(nxt)
        depth[side] += 1
    return Verdict(False, explored=explored)


def replay(p: HerbrandProof, v: Verdict, rigid: bool = True) -> bool:
    """Re-check a verdict's trace step by step against the proof's instances."""
    if not v.proved:
        return False
    inst = p.instances()
    lhs, rhs = p.target
    if v.by_instance is not None:
        a, b = inst[v.by_instance]
        return {a, b} == {lhs, rhs} and not v.trace
    cur = lhs
    for st in v.trace:
        if st.before != cur:
            return False
        a, b = inst[st.rule] if st.forward else inst[st.rule][::-1]
        sub = subterm(cur, st.position)
        if rigid:
            if sub != a:
                return False
            new_sub = b
        else:
            binding: dict[int, Term] = {}
            if not match(a, sub, binding):
                return False
            new_sub = substitute(b, binding)
        cur = replace_at(cur, st.position, new_sub)
        if cur != st.after:
            return False
    return cur == rhs


def ground_entails(instances: list[Pair], goal: Pair) -> bool:
    """Decide whether ground equations entail ``goal`` (congruence closure).

    With the goal's variables read as constants this is exactly validity of
    ``(instance_1 and ... and instance_n) => goal`` in all magmas.
    """
    terms: dict[Term, int] = {}

    def collect(t: Term) -> int:
        if t not in terms:
            if isinstance(t, App):
                collect(t.left)
                collect(t.right)
            terms[t] = len(terms)
        return terms[t]

    for a, b in list(instances) + [goal]:
        collect(a)
        collect(b)
    parent = list(range(len(terms)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    apps = [(terms[t], terms[t.left], terms[t.right]) for t in terms if isinstance(t, App)]
    for a, b in instances:
        parent[find(terms[a])] = find(terms[b])
    changed = True
    while changed:
        changed = False
        sig: dict[tuple[int, int], int] = {}
        for node, l, r in apps:
            key = (find(l), find(r))
            other = sig.setdefault(key, node)
            if find(other) != find(node):
                parent[find(node)] = find(other)
                changed = True
    return find(terms[goal[0]]) == find(terms[goal[1]])


def verify_semantically(p: HerbrandProof, sample) -> int | None:
    """Index of a magma satisfying the source but not the target, else ``None``."""
    from .stone import satisfies
    tables = sample.tables() if hasattr(sample, "tables") else np.asarray(sample)
    src = canonicalize(*p.source)
    tgt = canonicalize(*p.target)
    bad = satisfies(src, tables) & ~satisfies(tgt, tables)
    hits = np.flatnonzero(bad)
    return int(hits[0]) if len(hits) else None


# --------------------------------------------------------------------- files

def read_proof(path: str | Path, **limits) -> HerbrandProof:
    source = target = None
    steps = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition(":")
        key = key.strip().lower()
        try:
            if key == "source":
                source = parse_pair(val)
            elif key == "target":
                target = parse_pair(val)
            elif key == "step":
                steps.append(parse_substitution(val))
            else:
                raise HerbrandError(f"unknown key {key!r}")
        except (ParseError, HerbrandError) as exc:
            raise HerbrandError(f"{path}:{lineno}: {exc}") from None
    if source is None or target is None:
        raise HerbrandError(f"{path}: proof needs 'source:' and 'target:' lines")
    return HerbrandProof.make(source, target, steps, **limits)


def verdict_json(p: HerbrandProof, v: Verdict) -> str:
    d = {"source": format_pair(p.source), "target": format_pair(p.target),
         "steps": [format_substitution(s) for s in p.substitutions()], **v.as_dict()}
    return json.dumps(d, indent=2)
