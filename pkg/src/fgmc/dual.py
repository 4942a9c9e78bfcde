"""Dual grid: Hadamard-transformed kernels and parity (XOR) nodes.

In the Forney picture of a grid model each variable is an equality node and
each kernel sits on the two wires joining neighbouring nodes.  Dualising
replaces every kernel by its two-variable Fourier (Hadamard) transform

    nu(w_k, w_l) = sum_{x_k, x_l} kappa(x_k, x_l) (-1)^(w_k x_k + w_l x_l)

and every equality node by a parity check over its incident wire variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ResourceCapError
from .exact import brute_force_summary
from .graph import ComplexValue, GridModel, PairwiseKernel

DUAL_MAX_FRONTIER = 24
ZERO_RTOL = 1e-9


def hadamard2(kernel: PairwiseKernel) -> PairwiseKernel:
    """Two-variable Walsh-Hadamard transform of a 2x2 kernel."""
    vals = [[kernel(a, b).to_complex() for b in (0, 1)] for a in (0, 1)]
    out = []
    for wk in (0, 1):
        row = []
        for wl in (0, 1):
            re = im = 0.0
            for a in (0, 1):
                for b in (0, 1):
                    sign = -1.0 if (wk * a + wl * b) % 2 else 1.0
                    re += sign * vals[a][b].real
                    im += sign * vals[a][b].imag
            row.append(ComplexValue.from_complex(complex(re, im)))
        out.append(tuple(row))
    name = f"hadamard({kernel.name})" if kernel.name else None
    return PairwiseKernel(tuple(out), name)


@dataclass(frozen=True)
class DualGridModel:
    """Same topology as the primal grid; parity-check nodes, ``nu`` on every edge."""

    rows: int
    cols: int
    kernel: PairwiseKernel

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def primal(self) -> GridModel:
        return GridModel(self.rows, self.cols, self.kernel)

    @property
    def edges(self):
        return self.primal.edges

    def degrees(self) -> np.ndarray:
        return self.primal.degrees()


def dualize(model: GridModel | DualGridModel):
    """Dual of a grid model.  Dualising a dual returns a primal ``GridModel``."""
    nu = hadamard2(model.kernel)
    if isinstance(model, DualGridModel):
        return GridModel(model.rows, model.cols, nu)
    return DualGridModel(model.rows, model.cols, nu)


def _parity_contraction(rows: int, cols: int, table: np.ndarray, edges, max_frontier: int) -> complex:
    """Sum over wire assignments with even parity at every node of prod table[w_k, w_l].

    Edges are added one at a time; the state is the parity vector of the nodes
    that have some but not all of their wires assigned.  A node leaves the
    frontier once its last wire is in, keeping only the even-parity half.
    """
    n = rows * cols
    remaining = np.zeros(n, dtype=np.int64)
    for k, l in edges:
        remaining[k] += 1
        remaining[l] += 1
    active: list[int] = []
    state = np.ones(1, dtype=complex)
    for k, l in edges:
        for v in (k, l):
            if v not in active:
                if len(active) >= max_frontier:
                    raise ResourceCapError(f"dual contraction frontier exceeds {max_frontier} nodes")
                active.append(v)
                state = np.concatenate([state, np.zeros_like(state)])
        pk = 1 << active.index(k)
        pl = 1 << active.index(l)
        idx = np.arange(len(state))
        new = np.zeros_like(state)
        for a in (0, 1):
            for b in (0, 1):
                w = table[a, b]
                if w != 0:
                    new += w * state[idx ^ (a * pk) ^ (b * pl)]
        state = new
        for v in (k, l):
            remaining[v] -= 1
            if remaining[v] == 0:
                pos = active.index(v)
                low = 1 << pos
                state = state.reshape(-1, 2, low)[:, 0, :].reshape(-1)
                active.pop(pos)
    return complex(state[0])


def dual_partition(dual: DualGridModel, max_frontier: int = DUAL_MAX_FRONTIER, absolute: bool = False) -> complex:
    """Partition function ``Z_d`` of the dual grid.

    With ``absolute=True`` the magnitudes ``|nu|`` are used instead, which gives
    the scale against which ``Z_d = 0`` is judged.
    """
    table = dual.kernel.complex_table()
    if absolute:
        table = np.abs(table).astype(complex)
    return _parity_contraction(dual.rows, dual.cols, table, dual.edges, max_frontier)


def structural_dual_partition(dual: DualGridModel) -> complex | None:
    """Shortcut for kernels whose transform vanishes off ``(1, 1)``.

    Then only the all-ones wire pattern has a nonzero weight, and it satisfies
    a parity node exactly when the node degree is even.  Returns None when the
    kernel does not have that form.
    """
    k = dual.kernel
    if any(k(a, b).magnitude != 0 for a, b in ((0, 0), (0, 1), (1, 0))):
        return None
    if np.any(dual.degrees() % 2):
        return 0j
    return k(1, 1).to_complex() ** len(dual.edges)


@dataclass
class DualityReport:
    z_f: complex
    z_d: complex
    z_f_abs: float
    z_d_abs: float
    zero_f: bool
    zero_d: bool

    @property
    def zero_equivalence(self) -> bool:
        return self.zero_f == self.zero_d

    @property
    def ratio(self) -> complex | None:
        if self.zero_f:
            return None
        return self.z_d / self.z_f

    @property
    def passed(self) -> bool:
        return self.zero_equivalence

    def to_json(self) -> dict:
        r = self.ratio
        if r is None:
            ratio = None
        elif abs(r.imag) <= ZERO_RTOL * abs(r):
            ratio = r.real
        else:
            ratio = [r.real, r.imag]
        return {
            "z_f": [self.z_f.real, self.z_f.imag],
            "z_d": [self.z_d.real, self.z_d.imag],
            "ratio": ratio,
            "zero_equivalence": self.zero_equivalence,
        }


def duality_check(model: GridModel, max_n: int = 20) -> DualityReport:
    """Primal ``Z_f`` by enumeration against dual ``Z_d`` by parity contraction.

    Zero is judged relative to the matching absolute-value partition function
    on each side (``|Z| <= 1e-9 * Z_abs``).
    """
    if model.n > max_n:
        raise ResourceCapError(f"duality check needs N <= {max_n}, model has N = {model.n}")
    summary = brute_force_summary(model, max_n=max_n)
    z_f = summary.z_f
    z_f_abs = summary.z_abs
    dual = dualize(model)
    z_d = dual_partition(dual)
    z_d_abs = dual_partition(dual, absolute=True).real
    zero_f = abs(z_f) <= ZERO_RTOL * z_f_abs
    zero_d = abs(z_d) <= ZERO_RTOL * z_d_abs
    return DualityReport(z_f, z_d, z_f_abs, z_d_abs, zero_f, zero_d)


def duality_scale_survey(rows: int, cols: int, kernels: Iterable[PairwiseKernel], rtol: float = 1e-9):
    """Ratios ``Z_d / Z_f`` over several kernels on one topology.

    Returns ``(ratios, constant)`` where ``constant`` says whether all ratios
    agree to ``rtol``.
    """
    ratios = []
    for k in kernels:
        rep = duality_check(GridModel(rows, cols, k))
        if rep.ratio is not None:
            ratios.append(rep.ratio)
    if not ratios:
        return ratios, True
    ref = ratios[0]
    constant = all(abs(r - ref) <= rtol * abs(ref) for r in ratios)
    return ratios, constant


def random_positive_kernel(rng: np.random.Generator, low: float = 0.1, high: float = 3.0) -> PairwiseKernel:
    return PairwiseKernel.from_values(rng.uniform(low, high, size=(2, 2)).tolist(), "random")


def topology_constant_log2(rows: int, cols: int) -> float:
    """``log2`` of the measured ``Z_d / Z_f`` for ``kappa = 1``."""
    rep = duality_check(GridModel(rows, cols, PairwiseKernel.from_values([[1, 1], [1, 1]])))
    return math.log2(abs(rep.ratio))
