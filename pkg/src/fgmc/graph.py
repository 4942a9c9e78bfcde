"""Grid factor graphs with complex pairwise kernels.

A model is an ``rows x cols`` grid of binary variables ``x_0 .. x_{N-1}``
(row-major) with one pairwise factor per horizontal and vertical neighbour
pair.  The global function is the product of the kernel over all edges,

    f(x) = prod_{(k, l) in edges} kappa(x_k, x_l),

with ``k`` always the left/upper variable of the pair.

Values are tracked as a magnitude plus a phase.  When every kernel entry
lies on one of the axes ``{r, ir, -r, -ir}`` the phase is kept as an exact
quarter-turn index so that sign/phase bin membership never depends on
floating-point thresholds.
"""

from __future__ import annotations

import cmath
import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import DimensionError

TWO_PI = 2.0 * math.pi
SNAP_TOL = 1e-12
_UNITS = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)

# Per-sample bin codes used by the vectorised paths.
ZERO_CODE = 4
GENERAL_CODE = 5


@dataclass(frozen=True)
class ComplexValue:
    """Complex scalar stored as magnitude and phase.

    ``turn`` is the exact quarter-turn index (phase ``i**turn``); it is ``None``
    for a general phase, which is then given by ``angle`` in radians.
    """

    magnitude: float
    turn: int | None = 0
    angle: float = 0.0

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ValueError(f"magnitude must be nonnegative, got {self.magnitude}")
        if self.turn is not None:
            object.__setattr__(self, "turn", int(self.turn) % 4)
            object.__setattr__(self, "angle", self.turn * math.pi / 2)
        else:
            object.__setattr__(self, "angle", self.angle % TWO_PI)

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexValue":
        z = complex(z)
        if z == 0:
            return cls(0.0, 0)
        if z.imag == 0:
            return cls(abs(z.real), 0 if z.real > 0 else 2)
        if z.real == 0:
            return cls(abs(z.imag), 1 if z.imag > 0 else 3)
        return cls(abs(z), None, cmath.phase(z))

    @property
    def is_quarter_turn(self) -> bool:
        return self.turn is not None

    @property
    def is_zero(self) -> bool:
        return self.magnitude == 0

    def to_complex(self) -> complex:
        if self.turn is not None:
            return self.magnitude * _UNITS[self.turn]
        return cmath.rect(self.magnitude, self.angle)

    def re_im(self) -> tuple[float, float]:
        z = self.to_complex()
        return z.real, z.imag

    def __mul__(self, other: "ComplexValue") -> "ComplexValue":
        if not isinstance(other, ComplexValue):
            return NotImplemented
        mag = self.magnitude * other.magnitude
        if self.turn is not None and other.turn is not None:
            return ComplexValue(mag, self.turn + other.turn)
        return ComplexValue(mag, None, self.angle + other.angle)

    def __abs__(self) -> float:
        return self.magnitude

    def __complex__(self) -> complex:
        return self.to_complex()


@dataclass(frozen=True)
class PhaseBin:
    """Phase class of a value: exact quarter turn, zero, or a general angle."""

    kind: str
    turn: int = 0
    angle: float = 0.0

    @classmethod
    def exact(cls, turn: int) -> "PhaseBin":
        return cls("exact", int(turn) % 4, (int(turn) % 4) * math.pi / 2)

    @classmethod
    def general(cls, angle: float) -> "PhaseBin":
        return cls("general", 0, float(angle) % TWO_PI)

    @property
    def name(self) -> str:
        if self.kind == "exact":
            return BIN_NAMES[self.turn]
        if self.kind == "zero":
            return "zero"
        return f"angle:{self.angle!r}"

    @classmethod
    def from_name(cls, name: str) -> "PhaseBin":
        name = name.strip()
        if name in BIN_NAMES:
            return cls.exact(BIN_NAMES.index(name))
        if name == "zero":
            return ZERO
        if name.startswith("angle:"):
            return classify_angle(float(name[6:]))
        raise ValueError(f"unknown phase bin {name!r}")

    @property
    def phase(self) -> complex:
        """Unit complex number carried by every value in the bin (0 for the zero bin)."""
        if self.kind == "zero":
            return 0j
        if self.kind == "exact":
            return _UNITS[self.turn]
        return cmath.rect(1.0, self.angle)

    @property
    def code(self) -> int:
        return {"exact": self.turn, "zero": ZERO_CODE}.get(self.kind, GENERAL_CODE)

    def __str__(self) -> str:
        return self.name


BIN_NAMES = ("plus", "plus_i", "minus", "minus_i")
PLUS = PhaseBin.exact(0)
PLUS_I = PhaseBin.exact(1)
MINUS = PhaseBin.exact(2)
MINUS_I = PhaseBin.exact(3)
ZERO = PhaseBin("zero")
EXACT_BINS = (PLUS, PLUS_I, MINUS, MINUS_I)


def classify_angle(angle: float) -> PhaseBin:
    angle = angle % TWO_PI
    k = round(angle / (math.pi / 2))
    if abs(angle - k * math.pi / 2) <= SNAP_TOL:
        return PhaseBin.exact(k % 4)
    return PhaseBin.general(angle)


def classify_phase(v: ComplexValue) -> PhaseBin:
    """Bin of ``v``: ``ZERO``, an exact quarter turn, or a general angle.

    General angles within 1e-12 rad of a multiple of pi/2 snap to the exact bin.
    """
    if v.magnitude == 0:
        return ZERO
    if v.turn is not None:
        return PhaseBin.exact(v.turn)
    return classify_angle(v.angle)


@dataclass(frozen=True)
class PairwiseKernel:
    """2x2 table ``kappa(a, b)`` of complex values, indexed ``entries[a][b]``."""

    entries: tuple[tuple[ComplexValue, ComplexValue], tuple[ComplexValue, ComplexValue]]
    name: str | None = None

    def __post_init__(self):
        rows = tuple(tuple(self._coerce(v) for v in row) for row in self.entries)
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ValueError("kernel needs exactly 2x2 entries")
        object.__setattr__(self, "entries", rows)

    @staticmethod
    def _coerce(v) -> ComplexValue:
        if isinstance(v, ComplexValue):
            return v
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return ComplexValue.from_complex(complex(v[0], v[1]))
        return ComplexValue.from_complex(complex(v))

    @classmethod
    def from_values(cls, values, name: str | None = None) -> "PairwiseKernel":
        return cls(tuple(tuple(row) for row in values), name)

    def __call__(self, a: int, b: int) -> ComplexValue:
        return self.entries[a][b]

    def flat(self) -> tuple[ComplexValue, ...]:
        """Entries in index order ``2a + b``."""
        return (self.entries[0][0], self.entries[0][1], self.entries[1][0], self.entries[1][1])

    @property
    def has_zero_entry(self) -> bool:
        return any(v.magnitude == 0 for v in self.flat())

    @property
    def is_quarter_turn(self) -> bool:
        return all(v.turn is not None or v.magnitude == 0 for v in self.flat())

    @property
    def is_real(self) -> bool:
        for v in self.flat():
            if v.magnitude == 0:
                continue
            b = classify_phase(v)
            if b.kind != "exact" or b.turn % 2:
                return False
        return True

    def abs_table(self) -> np.ndarray:
        return np.array([[v.magnitude for v in row] for row in self.entries], dtype=float)

    def complex_table(self) -> np.ndarray:
        return np.array([[v.to_complex() for v in row] for row in self.entries], dtype=complex)

    def scaled(self, c: float) -> "PairwiseKernel":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return PairwiseKernel(
            tuple(tuple(ComplexValue(v.magnitude * c, v.turn, v.angle) for v in row) for row in self.entries),
            self.name,
        )

    def to_json(self) -> dict:
        out = {"entries": [[list(v.re_im()) for v in row] for row in self.entries]}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PairwiseKernel":
        entries = data["entries"]
        if len(entries) != 2 or any(len(row) != 2 for row in entries):
            raise ValueError("kernel JSON 'entries' must be a 2x2 array of [re, im] pairs")
        return cls(
            tuple(tuple(ComplexValue.from_complex(complex(re, im)) for re, im in row) for row in entries),
            data.get("name"),
        )

    # Tables consumed by the compiled kernels, indexed 2a + b.
    @cached_property
    def log2_flat(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(np.array([v.magnitude for v in self.flat()], dtype=np.float64))

    @cached_property
    def turn_flat(self) -> np.ndarray:
        return np.array([v.turn or 0 for v in self.flat()], dtype=np.int64)

    @cached_property
    def angle_flat(self) -> np.ndarray:
        return np.array([v.angle for v in self.flat()], dtype=np.float64)

    @cached_property
    def zero_flat(self) -> np.ndarray:
        return np.array([v.magnitude == 0 for v in self.flat()], dtype=np.bool_)


# -- presets ---------------------------------------------------------------

def neg13() -> PairwiseKernel:
    """1.3 on (0,0), 1 on (1,1), -1 otherwise."""
    return PairwiseKernel.from_values([[1.3, -1], [-1, 1]], "neg13")


def cplx15i() -> PairwiseKernel:
    """1.5 on (0,0), i on (1,1), 1 otherwise."""
    return PairwiseKernel.from_values([[1.5, 1], [1, 1j]], "cplx15i")


def pm(a: complex = 1.0) -> PairwiseKernel:
    """``a`` when the two variables agree, ``-a`` otherwise."""
    a = complex(a)
    if a == 0:
        raise ValueError("pm(a) requires a != 0")
    return PairwiseKernel.from_values([[a, -a], [-a, a]], f"pm({_fmt_param(a)})")


def constant(c: complex = 1.0) -> PairwiseKernel:
    c = complex(c)
    return PairwiseKernel.from_values([[c, c], [c, c]], f"const({_fmt_param(c)})")


def _fmt_param(a: complex) -> str:
    if a.imag == 0:
        return repr(a.real).removesuffix(".0") if a.real == int(a.real) else repr(a.real)
    if a.real == 0:
        return f"{_fmt_param(complex(a.imag))}i"
    return repr(a).strip("()")


PRESETS = {
    "neg13": "1.3 if x_k = x_l = 0; 1 if x_k = x_l = 1; -1 otherwise",
    "cplx15i": "1.5 if x_k = x_l = 0; i if x_k = x_l = 1; 1 otherwise",
    "pm(a)": "a if x_k = x_l; -a otherwise (a real or complex, nonzero)",
    "const(c)": "c everywhere ('ones' is const(1))",
}

_PARAM_RE = re.compile(r"^(pm|const)\((.+)\)$")


def parse_scalar(text: str) -> complex:
    """Parse ``2.5``, ``-1``, ``i``, ``-2i``, ``1+2j`` and friends."""
    t = text.strip().replace(" ", "").replace("i", "j")
    if t in ("j", "+j"):
        return 1j
    if t == "-j":
        return -1j
    return complex(t)


def kernel_from_preset(name: str) -> PairwiseKernel:
    key = name.strip()
    if key == "neg13":
        return neg13()
    if key == "cplx15i":
        return cplx15i()
    if key == "ones":
        return constant(1.0)
    m = _PARAM_RE.match(key)
    if m:
        value = parse_scalar(m.group(2))
        return pm(value) if m.group(1) == "pm" else constant(value)
    raise ValueError(f"unknown kernel preset {name!r}; known: {', '.join(PRESETS)}, ones")


def load_kernel(path: str | Path) -> PairwiseKernel:
    with open(path) as fh:
        return PairwiseKernel.from_json(json.load(fh))


# -- assignments -----------------------------------------------------------

def unpack_assignment(value: int, n: int) -> np.ndarray:
    """Bits of an integer-packed assignment; bit ``j`` of ``value`` is ``x_j``."""
    if value < 0 or value >> n:
        raise DimensionError(f"packed assignment {value} does not fit in {n} bits")
    return np.array([(value >> j) & 1 for j in range(n)], dtype=np.uint8)


def pack_assignment(bits: Sequence[int]) -> int:
    return sum(int(b) << j for j, b in enumerate(bits))


def as_bits(x, n: int) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return unpack_assignment(int(x), n)
    bits = np.asarray(x, dtype=np.uint8).reshape(-1)
    if bits.size != n:
        raise DimensionError(f"assignment has {bits.size} bits, model has {n} variables")
    if np.any(bits > 1):
        raise ValueError("assignment bits must be 0 or 1")
    return bits


# -- the grid --------------------------------------------------------------

@dataclass(frozen=True)
class GridModel:
    rows: int
    cols: int
    kernel: PairwiseKernel

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Ordered pairs (left/upper, right/lower), raster order: right then down per site."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                i = r * self.cols + c
                if c + 1 < self.cols:
                    out.append((i, i + 1))
                if r + 1 < self.rows:
                    out.append((i, i + self.cols))
        return tuple(out)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edge_array.ravel(), 1)
        return deg

    def label(self) -> str:
        return f"{self.rows}x{self.cols} {self.kernel.name or 'custom'}"


def evaluate_f(model: GridModel, x, edges: Sequence[tuple[int, int]] | None = None) -> ComplexValue:
    """Product of the kernel over ``edges`` (all model edges by default)."""
    bits = as_bits(x, model.n)
    kernel = model.kernel
    mag = 1.0
    if kernel.is_quarter_turn:
        turn = 0
        for k, l in model.edges if edges is None else edges:
            v = kernel.entries[bits[k]][bits[l]]
            mag *= v.magnitude
            turn += v.turn or 0
        return ComplexValue(mag, turn % 4)
    angle = 0.0
    for k, l in model.edges if edges is None else edges:
        v = kernel.entries[bits[k]][bits[l]]
        mag *= v.magnitude
        angle += v.angle
    return ComplexValue(mag, None, angle)


def abs_f(model: GridModel, x) -> float:
    bits = as_bits(x, model.n)
    table = model.kernel.abs_table()
    mag = 1.0
    for k, l in model.edges:
        mag *= table[bits[k], bits[l]]
    return mag


@numba.njit(cache=True)
def _eval_quarter_turn(bits, edges, log2_tab, turn_tab, zero_tab, out_log2, out_code):
    n_samples = bits.shape[0]
    n_edges = edges.shape[0]
    for s in range(n_samples):
        acc = 0.0
        turn = 0
        zero = False
        for e in range(n_edges):
            idx = 2 * bits[s, edges[e, 0]] + bits[s, edges[e, 1]]
            if zero_tab[idx]:
                zero = True
                break
            acc += log2_tab[idx]
            turn += turn_tab[idx]
        if zero:
            out_log2[s] = -np.inf
            out_code[s] = 4
        else:
            out_log2[s] = acc
            out_code[s] = turn % 4


def evaluate_batch(model: GridModel, bits: np.ndarray):
    """Vectorised evaluation of ``f`` on a ``(K, N)`` uint8 array.

    Returns ``(log2_abs, code, angle)``: ``log2|f|`` (``-inf`` where ``f = 0``),
    an int8 bin code (0-3 quarter turn, 4 zero, 5 general) and the phase in
    radians for general codes (zeros elsewhere).
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[1] != model.n:
        raise DimensionError(f"expected (K, {model.n}) bits, got {bits.shape}")
    k = model.kernel
    n_samples = bits.shape[0]
    log2 = np.empty(n_samples, dtype=np.float64)
    code = np.empty(n_samples, dtype=np.int8)
    angle = np.zeros(n_samples, dtype=np.float64)
    if k.is_quarter_turn:
        _eval_quarter_turn(bits, model.edge_array, k.log2_flat, k.turn_flat, k.zero_flat, log2, code)
        return log2, code, angle
    e = model.edge_array
    idx = 2 * bits[:, e[:, 0]].astype(np.int64) + bits[:, e[:, 1]]
    log2[:] = k.log2_flat[idx].sum(axis=1)
    zero = k.zero_flat[idx].any(axis=1)
    raw = k.angle_flat[idx].sum(axis=1) % TWO_PI
    near = np.rint(raw / (math.pi / 2))
    snapped = np.abs(raw - near * math.pi / 2) <= SNAP_TOL
    code[:] = np.where(snapped, near.astype(np.int64) % 4, GENERAL_CODE)
    angle[:] = np.where(snapped, 0.0, raw)
    code[zero] = ZERO_CODE
    log2[zero] = -np.inf
    return log2, code, angle


def bin_mask(code: np.ndarray, angle: np.ndarray, target: PhaseBin) -> np.ndarray:
    """Boolean mask of samples whose bin equals ``target``."""
    if target.kind == "general":
        diff = np.abs((angle - target.angle + math.pi) % TWO_PI - math.pi)
        return (code == GENERAL_CODE) & (diff <= 1e-9)
    return code == target.code
