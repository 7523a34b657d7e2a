"""Finite magmas as multiplication tables, sampling and term evaluation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .terms import App, Term, Var

MAX_SIZE = 16


class MagmaError(ValueError):
    pass


class Magma:
    """Magma on ``{0..N-1}``; ``table[a, b]`` is ``a ⋄ b``."""

    __slots__ = ("table",)

    def __init__(self, table):
        t = np.array(table, dtype=np.uint8)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise MagmaError(f"table must be a non-empty square array, got shape {t.shape}")
        if int(t.max()) >= t.shape[0]:
            raise MagmaError("table entry out of range")
        t.setflags(write=False)
        self.table = t

    @property
    def size(self) -> int:
        return self.table.shape[0]

    def op(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def __eq__(self, other):
        return isinstance(other, Magma) and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash((self.size, self.table.tobytes()))

    def __repr__(self):
        return f"Magma({self.table.tolist()})"

    @classmethod
    def constant(cls, n: int, value: int = 0) -> "Magma":
        return cls(np.full((n, n), value))

    @classmethod
    def left_projection(cls, n: int) -> "Magma":
        return cls(np.repeat(np.arange(n)[:, None], n, axis=1))

    @classmethod
    def right_projection(cls, n: int) -> "Magma":
        return cls(np.repeat(np.arange(n)[None, :], n, axis=0))


def opposite(m: Magma) -> Magma:
    """``a ⋄op b = b ⋄ a``."""
    return Magma(m.table.T)


@dataclass(frozen=True)
class MagmaSample:
    magmas: tuple[Magma, ...]
    seed: int
    symmetric: bool

    def __len__(self):
        return len(self.magmas)

    def __getitem__(self, i):
        return self.magmas[i]

    @property
    def size(self) -> int:
        return self.magmas[0].size

    def tables(self) -> np.ndarray:
        """Stacked tables, shape ``(n, N, N)``."""
        return np.stack([m.table for m in self.magmas])

    def opposite_index(self) -> list[int] | None:
        """Column permutation realized by taking opposites, when closed."""
        if not self.symmetric:
            return None
        return [i ^ 1 for i in range(len(self.magmas))]


def random_table(N: int, seed: int, index: int) -> np.ndarray:
    key = rng.stream_key(seed, 0x4D41474D41, index)  # "MAGMA"
    return rng.integers(key, N * N, N).reshape(N, N)


def sample_magmas(n: int, N: int, seed: int, symmetric: bool = False) -> MagmaSample:
    """Draw ``n`` uniform random magmas of size ``N``.

    Magma ``i`` uses its own stream keyed by ``(seed, i)``.  With
    ``symmetric``, draw ``n/2`` tables and follow each with its transpose.
    """
    if n < 1 or not 1 <= N <= MAX_SIZE:
        raise MagmaError(f"need n >= 1 and 1 <= N <= {MAX_SIZE}")
    if symmetric and n % 2:
        raise MagmaError("a symmetric sample needs an even n")
    out: list[Magma] = []
    if symmetric:
        for i in range(n // 2):
            t = random_table(N, seed, i)
            out += [Magma(t), Magma(t.T)]
    else:
        out = [Magma(random_table(N, seed, i)) for i in range(n)]
    return MagmaSample(tuple(out), seed, symmetric)


def all_magmas(N: int) -> list[Magma]:
    """Every magma of size N (N**(N*N) of them; only sensible for N <= 3)."""
    if N > 3:
        raise MagmaError("exhaustive enumeration is limited to N <= 3")
    return [Magma(np.array(t).reshape(N, N))
            for t in itertools.product(range(N), repeat=N * N)]


def eval_term(m: Magma, t: Term, assignment: Sequence[int]) -> int:
    if isinstance(t, Var):
        if t.index >= len(assignment):
            raise MagmaError(f"no binding for variable {t}")
        return assignment[t.index]
    return int(m.table[eval_term(m, t.left, assignment), eval_term(m, t.right, assignment)])


# ------------------------------------------------------------------- files

def format_magma(m: Magma) -> str:
    rows = "\n".join(" ".join(str(v) for v in row) for row in m.table.tolist())
    return f"{m.size}\n{rows}\n"


def write_sample(s: MagmaSample, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={len(s)} N={s.size} seed={s.seed} symmetric={int(s.symmetric)}\n")
        fh.write("\n".join(format_magma(m) for m in s.magmas))


def read_sample(path: str | Path) -> MagmaSample:
    seed, symmetric = 0, False
    blocks: list[list[str]] = [[]]
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if s.startswith("#"):
            fields = dict(f.split("=", 1) for f in s[1:].split() if "=" in f)
            seed = int(fields.get("seed", seed))
            symmetric = bool(int(fields.get("symmetric", symmetric)))
        elif not s:
            if blocks[-1]:
                blocks.append([])
        else:
            blocks[-1].append(s)
    mags = []
    for b in blocks:
        if not b:
            continue
        N = int(b[0])
        if len(b) != N + 1:
            raise MagmaError(f"magma block of size {N} has {len(b) - 1} rows")
        mags.append(Magma([[int(v) for v in row.split()] for row in b[1:]]))
    return MagmaSample(tuple(mags), seed, symmetric)
