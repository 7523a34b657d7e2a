"""Stone pairings, the feature matrix and its spectra.

The pairing of a law with a finite magma is the fraction of variable
assignments that satisfy it.  Exact evaluation compiles each side of the law
into a post-order program once, then evaluates it for every assignment and a
batch of magmas at a time using numpy broadcasting: variable ``j`` lives on
axis ``j + 1`` so shared subterms are only computed on the axes they use.
"""
from __future__ import annotations

import logging
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import rng
from .magma import Magma, MagmaSample
from .terms import App, Equation, Term, Var

log = logging.getLogger(__name__)

DEFAULT_EXACT_BUDGET = 2 ** 22
DEFAULT_MC_SAMPLES = 2 ** 16
MAX_VARS = 6
# cells evaluated per numpy call when batching magmas
_CHUNK_CELLS = 2 ** 21


class BudgetExceeded(RuntimeError):
    pass


class ExactPairing(NamedTuple):
    numerator: int
    denominator: int

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def __float__(self):
        return self.value

    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)


# ------------------------------------------------------------------ programs

@dataclass(frozen=True)
class Program:
    """Post-order evaluation plan for both sides of an equation.

    ``ops[i]`` is ``(-1, j)`` for variable ``j`` or ``(l, r)`` for the product of
    slots ``l`` and ``r``.  Identical subterms share one slot.
    """

    ops: tuple[tuple[int, int], ...]
    lhs: int
    rhs: int
    num_vars: int


def compile_equation(e: Equation) -> Program:
    ops: list[tuple[int, int]] = []
    slot: dict[Term, int] = {}

    def emit(t: Term) -> int:
        if t in slot:
            return slot[t]
        if isinstance(t, Var):
            op = (-1, t.index)
        else:
            op = (emit(t.left), emit(t.right))
        ops.append(op)
        slot[t] = len(ops) - 1
        return slot[t]

    lhs = emit(e.lhs)
    rhs = emit(e.rhs)
    return Program(tuple(ops), lhs, rhs, e.num_vars)


def _run(prog: Program, flat: np.ndarray, base: np.ndarray, N: int, assign=None):
    """Evaluate every slot.  ``assign`` overrides the grid with sampled tuples."""
    k = prog.num_vars
    vals: list[np.ndarray] = []
    for a, b in prog.ops:
        if a < 0:
            if assign is not None:
                v = assign[b][None, :]
            else:
                shape = [1] * (k + 1)
                shape[b + 1] = N
                v = np.arange(N, dtype=np.int64).reshape(shape)
        else:
            v = flat[base + vals[a] * N + vals[b]]
        vals.append(v)
    return vals[prog.lhs], vals[prog.rhs]


def exact_counts(e: Equation | Program, tables: np.ndarray) -> np.ndarray:
    """Satisfying-assignment counts of ``e`` in each of the stacked ``tables``."""
    prog = e if isinstance(e, Program) else compile_equation(e)
    M, N, _ = tables.shape
    k = prog.num_vars
    cells = N ** k
    flat = np.ascontiguousarray(tables, dtype=np.int64).reshape(-1)
    step = max(1, _CHUNK_CELLS // cells)
    out = np.empty(M, dtype=np.int64)
    for s in range(0, M, step):
        m = min(step, M - s)
        base = (np.arange(s, s + m, dtype=np.int64) * N * N).reshape((m,) + (1,) * k)
        lv, rv = _run(prog, flat, base, N)
        eq = np.broadcast_to(lv == rv, (m,) + (N,) * k)
        out[s:s + m] = eq.reshape(m, -1).sum(axis=1)
    return out


def mc_counts(e: Equation | Program, tables: np.ndarray, samples: int,
              keys: Sequence[int]) -> np.ndarray:
    """Satisfied counts among ``samples`` random assignments per magma.

    Magma ``i`` draws its assignments from the stream ``keys[i]``.
    """
    prog = e if isinstance(e, Program) else compile_equation(e)
    M, N, _ = tables.shape
    k = prog.num_vars
    flat = np.ascontiguousarray(tables, dtype=np.int64).reshape(-1)
    out = np.empty(M, dtype=np.int64)
    for i in range(M):
        ints = rng.integers(keys[i], samples * k, N).reshape(k, samples)
        base = np.full((1, 1), i * N * N, dtype=np.int64)
        lv, rv = _run(prog, flat, base, N, assign=ints)
        out[i] = int(np.count_nonzero(np.broadcast_to(lv == rv, (1, samples))))
    return out


def stone_pairing_exact(e: Equation, m: Magma, budget: int = DEFAULT_EXACT_BUDGET) -> ExactPairing:
    """Exact ``#{satisfying tuples} / N**k``."""
    den = m.size ** e.num_vars
    if den > budget:
        raise BudgetExceeded(f"{den} tuples exceed the exact budget {budget}")
    num = int(exact_counts(e, m.table[None])[0])
    return ExactPairing(num, den)


def stone_pairing_mc(e: Equation, m: Magma, samples: int = DEFAULT_MC_SAMPLES,
                     seed: int = 0) -> float:
    """Monte Carlo estimate of the pairing from ``samples`` uniform tuples."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    key = rng.stream_key(seed, 0x4D43)  # "MC"
    return int(mc_counts(e, m.table[None], samples, [key])[0]) / samples


def satisfies(e: Equation, tables: np.ndarray) -> np.ndarray:
    """Boolean validity of ``e`` in each stacked table."""
    N = tables.shape[1]
    return exact_counts(e, tables) == N ** e.num_vars


# ------------------------------------------------------------ feature matrix

@dataclass(frozen=True)
class StoneConfig:
    exact_budget: int = DEFAULT_EXACT_BUDGET
    mc_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    threads: int = 1


@dataclass
class FeatureMatrix:
    """Pairings ``values[k, l]`` of equation ``k`` with magma ``l``.

    Exact rows keep integer ``numerators`` over ``denominators[k] = N**k``;
    Monte Carlo rows have ``denominators[k] == 0`` and numerators counting hits
    among ``mc_samples`` draws.
    """

    values: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray
    N: int
    mc_samples: int = 0
    equations: list[Equation] | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.values.shape

    def is_exact(self, k: int) -> bool:
        return bool(self.denominators[k])

    def mode(self) -> str:
        if np.all(self.denominators > 0):
            return "exact"
        return f"monte-carlo({self.mc_samples})"

    def row_fractions(self, k: int) -> list[Fraction]:
        if not self.is_exact(k):
            raise ValueError(f"row {k} was estimated by Monte Carlo")
        d = int(self.denominators[k])
        return [Fraction(int(p), d) for p in self.numerators[k]]

    def _check(self, k: int) -> None:
        if not 0 <= k < self.values.shape[0]:
            raise IndexError(f"equation index {k} out of range")


def _mc_keys(seed: int, row: int, n: int) -> list[int]:
    return [rng.stream_key(seed, 0x4D43, row, col) for col in range(n)]


def build_feature_matrix(equations: Sequence[Equation], sample: MagmaSample,
                         config: StoneConfig = StoneConfig()) -> FeatureMatrix:
    """Fill the equations x magmas pairing matrix.

    Rows are exact when ``N**num_vars`` fits the budget, otherwise estimated
    with per-cell random streams keyed by ``(seed, row, column)``.  Each row is
    written by exactly one task, so the result does not depend on ``threads``.
    """
    eqs = list(equations)
    if not eqs or not len(sample):
        raise ValueError("need at least one equation and one magma")
    tables = sample.tables()
    n, N = tables.shape[0], tables.shape[1]
    m = len(eqs)
    nums = np.zeros((m, n), dtype=np.int64)
    dens = np.zeros(m, dtype=np.int64)

    def fill(k: int) -> None:
        prog = compile_equation(eqs[k])
        den = N ** prog.num_vars
        if den <= config.exact_budget:
            nums[k] = exact_counts(prog, tables)
            dens[k] = den
        else:
            nums[k] = mc_counts(prog, tables, config.mc_samples, _mc_keys(config.seed, k, n))

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            list(pool.map(fill, range(m)))
    else:
        for k in range(m):
            fill(k)
    scale = np.where(dens > 0, dens, config.mc_samples).astype(np.float64)
    values = nums / scale[:, None]
    mc = config.mc_samples if np.any(dens == 0) else 0
    return FeatureMatrix(values, nums, dens, N, mc, eqs)


# -------------------------------------------------------------------- spectra

@dataclass(frozen=True)
class Spectrum:
    """Multiset of pairings as sorted ``(value, multiplicity)`` pairs."""

    items: tuple[tuple[Fraction | float, int], ...]

    @classmethod
    def of(cls, values) -> "Spectrum":
        return cls(tuple(sorted(Counter(values).items())))

    @property
    def weight(self) -> int:
        return sum(c for _, c in self.items)

    def mean_variance(self) -> tuple[float, float]:
        w = self.weight
        mean = sum(v * c for v, c in self.items) / w
        var = sum((v - mean) ** 2 * c for v, c in self.items) / w
        return float(mean), float(var)

    def histogram(self, bins: int = 256) -> np.ndarray:
        """Counts on ``bins`` equal bins of [0, 1]; 1.0 falls in the last bin."""
        h = np.zeros(bins, dtype=np.int64)
        for v, c in self.items:
            h[min(int(float(v) * bins), bins - 1)] += c
        return h


@dataclass(frozen=True)
class InterferenceSpectrum:
    items: tuple[tuple[tuple, int], ...]

    @property
    def weight(self) -> int:
        return sum(c for _, c in self.items)


def _row_values(f: FeatureMatrix, k: int) -> list:
    f._check(k)
    if f.is_exact(k):
        return f.row_fractions(k)
    return [float(v) for v in f.values[k]]


def spectrum(f: FeatureMatrix, k: int) -> Spectrum:
    return Spectrum.of(_row_values(f, k))


def interference_spectrum(f: FeatureMatrix, j: int, k: int,
                          double_sum: bool = False) -> InterferenceSpectrum:
    """Multiset of aligned pairs ``(p_l, q_l)``.

    ``double_sum`` gives instead the product measure over all ``(p_i, q_j)``
    (weight ``n**2``), which smooths density plots.
    """
    p, q = _row_values(f, j), _row_values(f, k)
    if double_sum:
        cp, cq = Counter(p), Counter(q)
        items = {(a, b): ca * cb for a, ca in cp.items() for b, cb in cq.items()}
        return InterferenceSpectrum(tuple(sorted(items.items())))
    return InterferenceSpectrum(tuple(sorted(Counter(zip(p, q)).items())))


def expectation_variance(f: FeatureMatrix, k: int) -> tuple[float, float]:
    """Population mean and variance of row ``k``."""
    return spectrum(f, k).mean_variance()


def row_statistics(f: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized means and population variances of every row."""
    return f.values.mean(axis=1), f.values.var(axis=1)


# ---------------------------------------------------------------- persistence

MAGIC = b"STONEMAT"


def save_binary(f: FeatureMatrix, path: str | Path, exact_sidecar: bool = True) -> None:
    """``MAGIC``, uint32 version, uint64 rows, uint64 cols, then float32 row-major.

    The sidecar ``<path>.exact`` holds ``EXACTMAT``, uint64 rows, cols, N,
    mc_samples, int64 denominators (rows) and int64 numerators (row-major).
    """
    rows, cols = f.values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQQ", 1, rows, cols))
        fh.write(f.values.astype("<f4").tobytes())
    if exact_sidecar:
        with open(str(path) + ".exact", "wb") as fh:
            fh.write(b"EXACTMAT")
            fh.write(struct.pack("<QQQQ", rows, cols, f.N, f.mc_samples))
            fh.write(f.denominators.astype("<i8").tobytes())
            fh.write(f.numerators.astype("<i8").tobytes())


def load_binary(path: str | Path) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a feature matrix file")
    _, rows, cols = struct.unpack("<IQQ", data[8:28])
    vals = np.frombuffer(data[28:28 + 4 * rows * cols], dtype="<f4").reshape(rows, cols)
    side = Path(str(path) + ".exact")
    if not side.exists():
        return FeatureMatrix(vals.astype(np.float64), np.zeros((rows, cols), np.int64),
                             np.zeros(rows, np.int64), 0)
    raw = side.read_bytes()
    if raw[:8] != b"EXACTMAT":
        raise ValueError(f"{side}: bad sidecar")
    r2, c2, N, mc = struct.unpack("<QQQQ", raw[8:40])
    if (r2, c2) != (rows, cols):
        raise ValueError(f"{side}: shape mismatch")
    off = 40
    dens = np.frombuffer(raw[off:off + 8 * rows], dtype="<i8").astype(np.int64)
    off += 8 * rows
    nums = np.frombuffer(raw[off:off + 8 * rows * cols], dtype="<i8").reshape(rows, cols).astype(np.int64)
    scale = np.where(dens > 0, dens, max(mc, 1)).astype(np.float64)
    return FeatureMatrix(nums / scale[:, None], nums, dens, int(N), int(mc))


def write_csv(f: FeatureMatrix, path: str | Path) -> None:
    np.savetxt(path, f.values, delimiter=",", fmt="%.10g")


def write_spectrum_csv(s: Spectrum, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("value,multiplicity\n")
        for v, c in s.items:
            fh.write(f"{float(v)!r},{c}\n")


def write_interference_csv(s: InterferenceSpectrum, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("p,q,multiplicity\n")
        for (p, q), c in s.items:
            fh.write(f"{float(p)!r},{float(q)!r},{c}\n")
