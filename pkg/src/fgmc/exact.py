"""Exact partition quantities: brute-force enumeration and a phase-resolved
transfer matrix.

Both engines report, per phase bin ``b``, the partial sum ``Z_b`` and the exact
cardinality ``|X_b|``.  The transfer matrix adds sites one at a time to a
frontier of ``cols`` bits; because quarter-turn phases form the finite group
Z_4, the phase index can ride along in the DP state and each bin is read off
at the end.  Counts are Python integers (they overflow 64 bits past N = 63).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceCapError, UnsupportedKernelError
from .graph import (
    EXACT_BINS,
    GENERAL_CODE,
    ZERO_CODE,
    GridModel,
    PhaseBin,
    classify_angle,
    evaluate_batch,
)

BRUTE_FORCE_MAX_N = 24
TRANSFER_MAX_COLS = 14
_CHUNK = 1 << 16


@dataclass
class PartitionSummary:
    """Exact per-bin partial partition functions and bin cardinalities.

    ``log2_sums[b]`` is ``log2 |Z_b|``; the phase of ``Z_b`` is the bin's phase,
    so ``Z_b = b.phase * 2**log2_sums[b]``.  Keeping the log avoids overflow on
    tall grids.
    """

    rows: int
    cols: int
    method: str
    log2_sums: dict[PhaseBin, float]
    counts: dict[PhaseBin, int]
    zero_count: int = 0
    kernel_name: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def bins(self) -> list[PhaseBin]:
        return list(self.counts)

    def count(self, b: PhaseBin) -> int:
        return self.counts.get(b, 0)

    def log2_z(self, b: PhaseBin) -> float:
        return self.log2_sums.get(b, -math.inf)

    def z(self, b: PhaseBin) -> complex:
        lg = self.log2_z(b)
        return 0j if lg == -math.inf else b.phase * 2.0**lg

    @property
    def z_plus(self) -> float:
        return self.z(EXACT_BINS[0]).real

    @property
    def z_minus(self) -> float:
        return self.z(EXACT_BINS[2]).real

    @property
    def z_f(self) -> complex:
        return sum((self.z(b) for b in self.counts), 0j)

    @property
    def log2_z_abs(self) -> float:
        lgs = [v for v in self.log2_sums.values() if v > -math.inf]
        if not lgs:
            return -math.inf
        top = max(lgs)
        return top + math.log2(math.fsum(2.0 ** (v - top) for v in lgs))

    @property
    def z_abs(self) -> float:
        return 2.0**self.log2_z_abs

    def total_count(self) -> int:
        return sum(self.counts.values()) + self.zero_count

    def to_json(self) -> dict:
        bins = {}
        for b in sorted(self.counts, key=lambda b: (b.kind != "exact", b.turn, b.angle)):
            z = self.z(b)
            bins[b.name] = {
                "sum": [z.real, z.imag],
                "log2_abs": _json_float(self.log2_z(b)),
                "count": str(self.counts[b]),
            }
        zf = self.z_f
        out = {
            "method": self.method,
            "rows": self.rows,
            "cols": self.cols,
            "n": self.n,
            "kernel": self.kernel_name,
            "bins": bins,
            "zero_count": str(self.zero_count),
            "z_f": [zf.real, zf.imag],
            "z_abs": self.z_abs,
            "log2_z_abs": _json_float(self.log2_z_abs),
        }
        out.update(self.extra)
        return out


def _json_float(x: float):
    return None if math.isinf(x) else x


def _log2_fsum(values: list[float]) -> float:
    """log2 of the sum of ``2**v``, compensated."""
    finite = [v for v in values if v > -math.inf]
    if not finite:
        return -math.inf
    top = max(finite)
    return top + math.log2(math.fsum(2.0 ** (v - top) for v in finite))


def _enumerate_bits(start: int, stop: int, n: int) -> np.ndarray:
    ints = np.arange(start, stop, dtype=np.int64)
    return ((ints[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.uint8)


def brute_force_summary(model: GridModel, max_n: int = BRUTE_FORCE_MAX_N) -> PartitionSummary:
    """Enumerate all ``2**N`` assignments."""
    n = model.n
    if n > max_n:
        raise ResourceCapError(f"brute force needs N <= {max_n}, model has N = {n}")
    # Upper bound on log2|f| keeps every scaled term <= 1.
    top = float(np.max(model.kernel.log2_flat)) * model.n_edges
    partial: dict[PhaseBin, list[float]] = {}
    counts: dict[PhaseBin, int] = {b: 0 for b in EXACT_BINS}
    zero_count = 0
    total = 1 << n
    for start in range(0, total, _CHUNK):
        bits = _enumerate_bits(start, min(total, start + _CHUNK), n)
        log2, code, angle = evaluate_batch(model, bits)
        zero_count += int(np.count_nonzero(code == ZERO_CODE))
        for b in EXACT_BINS:
            sel = code == b.turn
            c = int(np.count_nonzero(sel))
            if c:
                counts[b] += c
                partial.setdefault(b, []).append(math.fsum(np.exp2(log2[sel] - top)))
        gen = code == GENERAL_CODE
        if gen.any():
            keys = np.round(angle[gen], 9)
            for key in np.unique(keys):
                sel = keys == key
                b = classify_angle(float(angle[gen][sel][0]))
                counts[b] = counts.get(b, 0) + int(np.count_nonzero(sel))
                partial.setdefault(b, []).append(math.fsum(np.exp2(log2[gen][sel] - top)))
    log2_sums = {}
    for b in counts:
        s = math.fsum(partial.get(b, []))
        log2_sums[b] = top + math.log2(s) if s > 0 else -math.inf
    return PartitionSummary(model.rows, model.cols, "brute", log2_sums, counts, zero_count, model.kernel.name)


def _site_factor(kernel, a: int, b: int):
    v = kernel.entries[a][b]
    return v.magnitude, (v.turn or 0), v.magnitude == 0


def _apply(piece: np.ndarray, mag, turn: int, zero: bool, counting: bool) -> np.ndarray:
    """Multiply a (5, ...) phase-resolved block by one factor."""
    out = np.zeros_like(piece)
    if zero:
        if counting:
            out[4] = piece.sum(axis=0)
        return out
    out[:4] = np.roll(piece[:4], turn, axis=0)
    out[4] = piece[4]
    if mag != 1:
        out *= mag
    return out


def _transfer(model: GridModel, counting: bool):
    """Site-by-site contraction; returns (per-phase totals, log2 scale).

    State array shape is ``(5, 2**cols)``: phase index 0-3 plus an absorbing
    zero slot, times the frontier bits (bit ``c`` holds the newest value in
    column ``c``).  Placing site ``(r, c)`` reads its upper neighbour from bit
    ``c`` and its left neighbour from bit ``c - 1``, then overwrites bit ``c``.
    """
    rows, cols, kernel = model.rows, model.cols, model.kernel
    size = 1 << cols
    dtype = np.int64 if counting else np.float64
    state = np.zeros((5, size), dtype=dtype)
    state[0, 0] = 1
    log2_scale = 0.0
    placed = 0
    for r in range(rows):
        for c in range(cols):
            if counting and state.dtype != object and placed >= 62:
                state = state.astype(object)
            low = 1 << c
            view = state.reshape(5, size // (2 * low), 2, low)
            new = np.zeros_like(view)
            ups = (0, 1) if r > 0 else (0,)
            for x in (0, 1):
                acc = np.zeros((5, view.shape[1], low), dtype=state.dtype)
                for up in ups:
                    src = view[:, :, up, :]
                    if r > 0:
                        mu, tu, zu = _site_factor(kernel, up, x)
                    else:
                        mu, tu, zu = 1.0, 0, False
                    if c == 0:
                        w = 1 if counting else mu
                        acc += _apply(src, w, tu, zu, counting)
                        continue
                    halves = src.reshape(5, src.shape[1], 2, low // 2)
                    for left in (0, 1):
                        ml, tl, zl = _site_factor(kernel, left, x)
                        w = 1 if counting else mu * ml
                        part = _apply(halves[:, :, left, :], w, tu + tl, zu or zl, counting)
                        acc.reshape(5, src.shape[1], 2, low // 2)[:, :, left, :] += part
                new[:, :, x, :] = acc
            state = new.reshape(5, size)
            placed += 1
        if not counting:
            peak = float(state.max())
            if peak > 0:
                state /= peak
                log2_scale += math.log2(peak)
    totals = [state[p].sum() for p in range(5)]
    return totals, log2_scale


def transfer_matrix_summary(model: GridModel, max_cols: int = TRANSFER_MAX_COLS) -> PartitionSummary:
    """Exact summary by phase-resolved transfer matrix (quarter-turn kernels only)."""
    if not model.kernel.is_quarter_turn:
        raise UnsupportedKernelError(
            "transfer matrix needs every kernel entry on the axes {r, ir, -r, -ir}; use brute force"
        )
    if model.cols > max_cols:
        raise ResourceCapError(f"transfer matrix needs cols <= {max_cols}, model has cols = {model.cols}")
    mags, scale = _transfer(model, counting=False)
    counts_raw, _ = _transfer(model, counting=True)
    log2_sums = {}
    counts = {}
    for b in EXACT_BINS:
        m = float(mags[b.turn])
        log2_sums[b] = scale + math.log2(m) if m > 0 else -math.inf
        counts[b] = int(counts_raw[b.turn])
    return PartitionSummary(
        model.rows, model.cols, "transfer", log2_sums, counts, int(counts_raw[4]), model.kernel.name
    )


def exact_summary(model: GridModel, method: str = "auto") -> PartitionSummary:
    """Dispatch to an engine: ``brute``, ``transfer`` or ``auto`` (transfer when possible)."""
    if method == "brute":
        return brute_force_summary(model)
    if method == "transfer":
        return transfer_matrix_summary(model)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if model.kernel.is_quarter_turn and model.cols <= TRANSFER_MAX_COLS:
        return transfer_matrix_summary(model)
    return brute_force_summary(model)


def summaries_agree(a: PartitionSummary, b: PartitionSummary, rtol: float = 1e-9) -> bool:
    """Counts exactly equal and sums within ``rtol`` relative."""
    keys = set(a.counts) | set(b.counts)
    if a.zero_count != b.zero_count:
        return False
    for k in keys:
        if a.count(k) != b.count(k):
            return False
        la, lb = a.log2_z(k), b.log2_z(k)
        if la == -math.inf or lb == -math.inf:
            if la != lb:
                return False
            continue
        if abs(2.0 ** (la - lb) - 1.0) > rtol:
            return False
    return True
