"""Monte Carlo estimators of partial partition functions and bin sizes.

Each estimator is a streaming fold over ``SampleBlock`` chunks that records
its running value at a set of checkpoints.  Z-type quantities are kept in the
log2 domain (running sums by ``logaddexp2.accumulate``) with the bin's phase
factored out, so every accumulator is a real sum of magnitudes.

Estimators (per bin ``b`` with known size ``|X_b|``):

* uniform:        Z_b ~ |X_b| / K * sum f(x_k),          x_k uniform on X_b
* Ogata-Tanemura: 1/Z_b ~ 1 / (K |X_b|) * sum 1/f(x_k),  x_k ~ f / Z_b on X_b
* counting:       |X_b| ~ 2^N / K * #{k : x_k in X_b},   x_k uniform on X
* |f|-sampling:   Lambda = 1/K sum 1/f,  Gamma = 1/K sum 1/|f|,  x_k ~ |f| / Z_|f|,
                  then |X+| - |X-| ~ (Lambda / Gamma) 2^N.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import (
    CancellationWarning,
    ContractViolation,
    IncompleteInputError,
    PreconditionError,
    UnsupportedEstimatorError,
)
from .graph import EXACT_BINS, MINUS, PLUS, ZERO, GridModel, PhaseBin
from .samplers import SampleBlock

ESTIMATORS = ("uniform_z", "ogata_tanemura", "count_uniform", "count_absgibbs")
DEFAULT_CHECKPOINTS = 200
CANCELLATION_RATIO = 0.01


def checkpoints(total: int, n_points: int = DEFAULT_CHECKPOINTS) -> np.ndarray:
    """Sample indices (1-based) at which running estimates are recorded.

    Half geometric, half linear spacing; always includes 1 and ``total``.
    """
    if total <= n_points:
        return np.arange(1, total + 1, dtype=np.int64)
    half = max(n_points // 2, 2)
    pts = np.concatenate([
        np.geomspace(1, total, half),
        np.linspace(1, total, half),
    ])
    return np.unique(np.rint(pts).astype(np.int64).clip(1, total))


@dataclass
class EstimatorTrace:
    """Running estimate of one chain, recorded at sample indices ``k``.

    The estimate at ``k[j]`` is ``phase[j] * 2**log2[j]``.
    """

    estimator_id: str
    bin: PhaseBin | None
    chain_id: int
    k: np.ndarray
    log2: np.ndarray
    phase: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.k)

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.phase * np.exp2(self.log2)

    @property
    def final(self) -> complex:
        return complex(self.values[-1])

    @property
    def final_log2(self) -> float:
        return float(self.log2[-1])

    @property
    def n_samples(self) -> int:
        return int(self.k[-1]) if len(self.k) else 0


def _log2_int(n) -> float:
    return math.log2(n) if n > 0 else -math.inf


class _LogSum:
    """Running ``log2 sum 2**v`` over a stream, read out at chosen indices."""

    def __init__(self, points: np.ndarray | None):
        self.points = points
        self.total = -math.inf
        self.seen = 0
        self.k: list[np.ndarray] = []
        self.at: list[np.ndarray] = []

    def push(self, values: np.ndarray, record: bool = True):
        if len(values) == 0:
            return
        run = np.logaddexp2.accumulate(values)
        run = np.logaddexp2(run, self.total)
        if record:
            idx = self._select(len(values))
            self.k.append(self.seen + idx + 1)
            self.at.append(run[idx])
        self.total = float(run[-1])
        self.seen += len(values)

    def _select(self, n: int) -> np.ndarray:
        lo, hi = self.seen, self.seen + n
        if self.points is None:
            return np.arange(n)
        pts = self.points[(self.points > lo) & (self.points <= hi)]
        return pts - lo - 1

    def result(self):
        if not self.k:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(self.k), np.concatenate(self.at)


def _check_bin(block: SampleBlock, target: PhaseBin):
    if not block.mask(target).all():
        raise ContractViolation(f"estimator for bin {target.name} received a sample outside that bin")


def _resolve_points(points, count):
    if points is not None:
        return np.asarray(points, dtype=np.int64)
    if count is not None:
        return checkpoints(count)
    return None


def estimate_Z_uniform(
    model: GridModel,
    target: PhaseBin,
    bin_count,
    samples: Iterable[SampleBlock],
    chain_id: int = 0,
    points=None,
    count: int | None = None,
) -> EstimatorTrace:
    """Running ``(|X_b| / k) * sum f(x_j)`` over samples uniform on bin ``target``.

    ``bin_count`` may be an exact integer or an estimate.  ``points`` selects the
    recorded sample indices (every index when neither it nor ``count`` is given).
    """
    if target == ZERO or target is None:
        raise ValueError("uniform Z estimator needs a nonzero phase bin")
    acc = _LogSum(_resolve_points(points, count))
    for block in samples:
        _check_bin(block, target)
        acc.push(block.log2_abs)
    if acc.seen == 0:
        raise PreconditionError("no samples")
    k, run = acc.result()
    log2 = _log2_int(bin_count) + run - np.log2(k)
    return EstimatorTrace("uniform_z", target, chain_id, k, log2, np.full(len(k), target.phase))


def estimate_Z_ogata_tanemura(
    model: GridModel,
    target: PhaseBin,
    bin_count,
    samples: Iterable[SampleBlock],
    chain_id: int = 0,
    points=None,
    count: int | None = None,
) -> EstimatorTrace:
    """Reciprocal estimator on samples distributed as ``f / Z_b`` over bin ``target``.

    Tracks ``Gamma_b = 1/(k |X_b|) * sum 1/f``; the trace reports ``1/Gamma_b``
    (the Z estimate) and ``extra['gamma_log2']``/``extra['gamma_phase']`` carry
    ``Gamma_b`` itself.
    """
    if target == ZERO or target is None:
        raise ValueError("Ogata-Tanemura estimator needs a nonzero phase bin")
    acc = _LogSum(_resolve_points(points, count))
    for block in samples:
        _check_bin(block, target)
        if np.isneginf(block.log2_abs).any():
            raise PreconditionError("f(x) = 0 encountered; the kernel must have no zero entries")
        acc.push(-block.log2_abs)
    if acc.seen == 0:
        raise PreconditionError("no samples")
    k, run = acc.result()
    gamma_log2 = run - np.log2(k) - _log2_int(bin_count)
    trace = EstimatorTrace(
        "ogata_tanemura", target, chain_id, k, -gamma_log2, np.full(len(k), target.phase)
    )
    trace.extra["gamma_log2"] = gamma_log2
    trace.extra["gamma_phase"] = np.conj(target.phase)
    return trace


def count_bins_uniform(
    model: GridModel,
    samples: Iterable[SampleBlock],
    chain_id: int = 0,
    points=None,
    count: int | None = None,
) -> dict[PhaseBin, EstimatorTrace]:
    """Running ``xi_b = 2^N / k * #{j <= k : x_j in b}`` for every bin seen.

    Always reports the four quarter-turn bins and the zero bin; general-angle
    bins appear when they occur.  Raw integer counts are kept in
    ``extra['counts']`` so the identity ``sum_b xi_b = 2^N`` can be checked
    exactly.
    """
    pts = _resolve_points(points, count)
    keys: list[PhaseBin] = list(EXACT_BINS) + [ZERO]
    totals: dict[PhaseBin, int] = {b: 0 for b in keys}
    rec_k: list[np.ndarray] = []
    rec: dict[PhaseBin, list[np.ndarray]] = {b: [] for b in keys}
    seen = 0
    for block in samples:
        n = len(block)
        if n == 0:
            continue
        if pts is None:
            idx = np.arange(n)
        else:
            sel = pts[(pts > seen) & (pts <= seen + n)]
            idx = sel - seen - 1
        # Bins present in this block (general angles are grouped on the fly).
        present = list(keys)
        if (block.code == 5).any():
            for a in np.unique(np.round(block.angle[block.code == 5], 9)):
                b = PhaseBin.general(float(a))
                if b not in totals:
                    totals[b] = 0
                    rec[b] = [np.zeros(len(x), dtype=object) for x in rec_k]
                    keys.append(b)
            present = list(keys)
        for b in present:
            cum = np.cumsum(block.mask(b), dtype=np.int64)
            rec[b].append((totals[b] + cum[idx]).astype(object))
            totals[b] += int(cum[-1])
        rec_k.append(seen + idx + 1)
        seen += n
    if seen == 0:
        raise PreconditionError("no samples")
    k = np.concatenate(rec_k)
    out = {}
    for b in keys:
        c = np.concatenate(rec[b]) if rec[b] else np.zeros(len(k), dtype=object)
        with np.errstate(divide="ignore"):
            log2 = model.n + np.log2(c.astype(np.float64)) - np.log2(k)
        tr = EstimatorTrace("count_uniform", b, chain_id, k, log2, np.ones(len(k), dtype=complex))
        tr.extra["counts"] = c
        out[b] = tr
    return out


@dataclass
class AbsGibbsCounts:
    plus: float
    minus: float
    log2_plus: float
    log2_minus: float
    lambda_trace: EstimatorTrace
    gamma_trace: EstimatorTrace
    count_traces: dict[PhaseBin, EstimatorTrace]


def count_bins_absgibbs(
    model: GridModel,
    samples: Iterable[SampleBlock],
    chain_id: int = 0,
    points=None,
    count: int | None = None,
) -> AbsGibbsCounts:
    """Solve ``|X+| + |X-| = 2^N`` and ``|X+| - |X-| = (Lambda/Gamma) 2^N``.

    Samples must come from ``|f| / Z_|f|``; only real kernels without zero
    entries qualify (four phase bins would leave the system underdetermined).
    """
    kernel = model.kernel
    if not kernel.is_real:
        raise UnsupportedEstimatorError(
            "count_absgibbs handles real kernels only; use count_uniform for complex kernels"
        )
    if kernel.has_zero_entry:
        raise PreconditionError("count_absgibbs assumes |X0| = 0; the kernel has a zero entry")
    pts = _resolve_points(points, count)
    pos = _LogSum(pts)
    neg = _LogSum(pts)
    for block in samples:
        inv = -block.log2_abs
        is_pos = block.code == 0
        if not (is_pos | (block.code == 2)).all():
            raise ContractViolation("count_absgibbs received a sample outside the plus/minus bins")
        pos.push(np.where(is_pos, inv, -np.inf))
        neg.push(np.where(is_pos, -np.inf, inv))
    if pos.seen == 0:
        raise PreconditionError("no samples")
    k, lp = pos.result()
    _, ln = neg.result()
    log2k = np.log2(k)
    gamma_log2 = np.logaddexp2(lp, ln) - log2k
    # Lambda = (S+ - S-) / k, kept as log2|Lambda| with a sign.
    hi = np.maximum(lp, ln)
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.exp2(lp - hi) - np.exp2(ln - hi)
        lam_log2 = hi + np.log2(np.abs(diff)) - log2k
    lam_sign = np.sign(diff).astype(complex)
    # rho = Lambda / Gamma in [-1, 1].
    with np.errstate(invalid="ignore"):
        rho = np.clip(diff / (np.exp2(lp - hi) + np.exp2(ln - hi)), -1.0, 1.0)
    n = model.n
    with np.errstate(divide="ignore"):
        log2_plus = n + np.log2((1 + rho) / 2)
        log2_minus = n + np.log2((1 - rho) / 2)
    lam = EstimatorTrace("count_absgibbs", None, chain_id, k, lam_log2, lam_sign, {"quantity": "lambda"})
    gam = EstimatorTrace(
        "count_absgibbs", None, chain_id, k, gamma_log2, np.ones(len(k), dtype=complex), {"quantity": "gamma"}
    )
    ones = np.ones(len(k), dtype=complex)
    traces = {
        PLUS: EstimatorTrace("count_absgibbs", PLUS, chain_id, k, log2_plus, ones),
        MINUS: EstimatorTrace("count_absgibbs", MINUS, chain_id, k, log2_minus, ones.copy()),
    }
    return AbsGibbsCounts(
        plus=float(2.0 ** log2_plus[-1]),
        minus=float(2.0 ** log2_minus[-1]),
        log2_plus=float(log2_plus[-1]),
        log2_minus=float(log2_minus[-1]),
        lambda_trace=lam,
        gamma_trace=gam,
        count_traces=traces,
    )


# -- combining bins and chains ----------------------------------------------

@dataclass(frozen=True)
class BinEstimate:
    value: complex
    stderr: float = 0.0


def combine_chains(finals: Iterable[complex]) -> BinEstimate:
    """Mean over independent chains with standard error ``std / sqrt(R)``."""
    arr = np.asarray(list(finals), dtype=complex)
    if len(arr) == 0:
        raise IncompleteInputError("no chain results")
    if len(arr) == 1:
        return BinEstimate(complex(arr[0]), math.nan)
    se = math.sqrt(np.var(arr.real, ddof=1) + np.var(arr.imag, ddof=1)) / math.sqrt(len(arr))
    return BinEstimate(complex(arr.mean()), se)


@dataclass
class ZfResult:
    value: complex
    stderr: float
    abs_total: float
    cancellation: bool
    per_bin: dict[PhaseBin, BinEstimate]

    def to_json(self) -> dict:
        return {
            "z_f": [self.value.real, self.value.imag],
            "stderr": self.stderr,
            "abs_total": self.abs_total,
            "cancellation": self.cancellation,
            "bins": {
                b.name: {"value": [e.value.real, e.value.imag], "stderr": e.stderr}
                for b, e in self.per_bin.items()
            },
        }


def assemble_Zf(estimates, required: Iterable[PhaseBin] | None = None) -> ZfResult:
    """``Z_f = sum_b Z_b`` with combined standard error ``sqrt(sum_b se_b^2)``.

    ``estimates`` is a mapping ``bin -> BinEstimate`` (or plain complex), or a
    ``PartitionSummary``.  ``required`` lists the bins that must be present
    (default: whatever is given).  Emits ``CancellationWarning`` when
    ``|Z_f| < 0.01 * sum_b |Z_b|``.
    """
    from .exact import PartitionSummary

    if isinstance(estimates, PartitionSummary):
        required = [b for b, c in estimates.counts.items() if c > 0] if required is None else required
        estimates = {b: BinEstimate(estimates.z(b)) for b in estimates.counts}
    per_bin: dict[PhaseBin, BinEstimate] = {}
    for b, e in dict(estimates).items():
        per_bin[b] = e if isinstance(e, BinEstimate) else BinEstimate(complex(e))
    missing = [b.name for b in (required or []) if b not in per_bin]
    if missing:
        raise IncompleteInputError(f"missing estimates for bins: {', '.join(missing)}")
    value = sum((e.value for e in per_bin.values()), 0j)
    stderr = math.sqrt(sum(e.stderr**2 for e in per_bin.values()))
    abs_total = sum(abs(e.value) for e in per_bin.values())
    cancel = abs_total > 0 and abs(value) < CANCELLATION_RATIO * abs_total
    if cancel:
        warnings.warn(
            f"|Z_f| = {abs(value):.3g} is below {CANCELLATION_RATIO} of sum |Z_b| = {abs_total:.3g}; "
            "the partial sums cancel and Z_f is poorly determined",
            CancellationWarning,
            stacklevel=2,
        )
    return ZfResult(value, stderr, abs_total, cancel, per_bin)
