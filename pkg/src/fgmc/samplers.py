"""Seeded samplers over ``{0,1}^N``.

Three sources of assignments:

* ``uniform_sample``: i.i.d. fair bits.
* ``uniform_bin_sample``: the uniform stream filtered by rejection to one
  phase bin (uniform on that bin).
* ``gibbs_sample_abs``: a Markov chain with stationary law ``|f(x)| / Z_|f|``,
  either single-site or row-blocked (each row redrawn exactly by
  forward filtering / backward sampling given its neighbour rows).

Samples from the ``|f|`` chain restricted to one bin are distributed as
``f / Z_bin`` on that bin, so a single chain feeds every bin's estimator.

Every stream is a pure function of ``(seed, chain_id, config)``.  The RNG is
``PCG64`` seeded by ``SeedSequence(seed, spawn_key=(chain_id,))``; the chain
substreams are therefore the ``spawn`` children of the base seed.  Samples are
yielded in ``SampleBlock`` chunks of fixed size so memory stays bounded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numba
import numpy as np

from .errors import EmptyBinError, PreconditionError
from .graph import (
    GridModel,
    PhaseBin,
    ComplexValue,
    bin_mask,
    classify_phase,
    evaluate_batch,
)

SCHEMES = ("single-site", "row-blocked")
DEFAULT_BLOCK = 1 << 14
DEFAULT_MAX_DRAWS = 10**7
SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    chain_id: int = 0
    burn_in: int = 100
    thinning: int = 1
    scheme: str = "single-site"

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & SEED_MASK, spawn_key=(int(self.chain_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def for_chain(self, chain_id: int) -> "SamplerConfig":
        return SamplerConfig(self.seed, chain_id, self.burn_in, self.thinning, self.scheme)


@dataclass(frozen=True)
class BinnedSample:
    x: np.ndarray
    value: ComplexValue
    bin: PhaseBin


@dataclass
class SampleBlock:
    """A chunk of samples with their ``log2|f|``, bin code and general angle."""

    bits: np.ndarray
    log2_abs: np.ndarray
    code: np.ndarray
    angle: np.ndarray

    def __len__(self) -> int:
        return len(self.log2_abs)

    def select(self, mask) -> "SampleBlock":
        return SampleBlock(self.bits[mask], self.log2_abs[mask], self.code[mask], self.angle[mask])

    def mask(self, target: PhaseBin) -> np.ndarray:
        return bin_mask(self.code, self.angle, target)

    def samples(self) -> Iterator[BinnedSample]:
        for j in range(len(self)):
            code = int(self.code[j])
            if code == 4:
                value = ComplexValue(0.0, 0)
            elif code == 5:
                value = ComplexValue(float(2.0 ** self.log2_abs[j]), None, float(self.angle[j]))
            else:
                value = ComplexValue(float(2.0 ** self.log2_abs[j]), code)
            yield BinnedSample(self.bits[j].copy(), value, classify_phase(value))

    @classmethod
    def from_bits(cls, model: GridModel, bits: np.ndarray) -> "SampleBlock":
        log2, code, angle = evaluate_batch(model, bits)
        return cls(bits, log2, code, angle)


def iter_samples(blocks: Iterable[SampleBlock]) -> Iterator[BinnedSample]:
    for block in blocks:
        yield from block.samples()


# -- uniform ---------------------------------------------------------------

def uniform_sample(
    model: GridModel, cfg: SamplerConfig, count: int | None, block_size: int = DEFAULT_BLOCK
) -> Iterator[SampleBlock]:
    """``count`` i.i.d. uniform assignments (endless when ``count`` is None)."""
    if count is not None and count < 1:
        raise ValueError("count must be >= 1")
    rng = cfg.rng()
    done = 0
    while count is None or done < count:
        bits = rng.integers(0, 2, size=(block_size, model.n), dtype=np.uint8)
        if count is not None and done + block_size > count:
            bits = bits[: count - done]
        done += len(bits)
        yield SampleBlock.from_bits(model, bits)


class RejectionSampler:
    """Uniform samples on one bin, by rejection from ``uniform_sample``.

    Iterate to get ``SampleBlock`` chunks; ``draws``/``accepted`` and
    ``acceptance_rate`` are updated as the stream is consumed.  The draw budget
    is ``max_draws * (accepted + 1)``; running out raises ``EmptyBinError``.
    """

    def __init__(
        self,
        model: GridModel,
        cfg: SamplerConfig,
        target: PhaseBin,
        count: int,
        max_draws: int = DEFAULT_MAX_DRAWS,
        block_size: int = DEFAULT_BLOCK,
    ):
        if count < 1:
            raise ValueError("count must be >= 1")
        self.model = model
        self.cfg = cfg
        self.target = target
        self.count = count
        self.max_draws = max_draws
        self.block_size = block_size
        self.draws = 0
        self.accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.draws if self.draws else float("nan")

    def __iter__(self) -> Iterator[SampleBlock]:
        for block in uniform_sample(self.model, self.cfg, None, self.block_size):
            mask = block.mask(self.target)
            hits = np.flatnonzero(mask)
            need = self.count - self.accepted
            if len(hits) >= need:
                # Stop at the draw that completes the request.
                last = hits[need - 1]
                self.draws += int(last) + 1
                self.accepted += need
                yield block.select(hits[:need])
                return
            self.draws += len(block)
            self.accepted += len(hits)
            if len(hits):
                yield block.select(hits)
            if self.draws >= self.max_draws * (self.accepted + 1):
                raise EmptyBinError(
                    f"{self.draws} draws gave {self.accepted} samples in bin {self.target.name}; "
                    "the bin is probably empty"
                )


def uniform_bin_sample(
    model: GridModel,
    cfg: SamplerConfig,
    target: PhaseBin,
    count: int,
    max_draws: int = DEFAULT_MAX_DRAWS,
    block_size: int = DEFAULT_BLOCK,
) -> RejectionSampler:
    return RejectionSampler(model, cfg, target, count, max_draws, block_size)


# -- Gibbs on |f| ----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _site_sweep(x, rows, cols, tab, u):
    i = 0
    for r in range(rows):
        for c in range(cols):
            w0 = 1.0
            w1 = 1.0
            if c > 0:
                a = x[i - 1]
                w0 *= tab[a, 0]
                w1 *= tab[a, 1]
            if c + 1 < cols:
                b = x[i + 1]
                w0 *= tab[0, b]
                w1 *= tab[1, b]
            if r > 0:
                a = x[i - cols]
                w0 *= tab[a, 0]
                w1 *= tab[a, 1]
            if r + 1 < rows:
                b = x[i + cols]
                w0 *= tab[0, b]
                w1 *= tab[1, b]
            x[i] = 1 if u[i] * (w0 + w1) < w1 else 0
            i += 1


@numba.njit(cache=True, nogil=True)
def _row_update(x, r, rows, cols, tab, u, alpha):
    base = r * cols
    for c in range(cols):
        e0 = 1.0
        e1 = 1.0
        if r > 0:
            a = x[base + c - cols]
            e0 *= tab[a, 0]
            e1 *= tab[a, 1]
        if r + 1 < rows:
            b = x[base + c + cols]
            e0 *= tab[0, b]
            e1 *= tab[1, b]
        if c == 0:
            a0 = e0
            a1 = e1
        else:
            a0 = e0 * (alpha[c - 1, 0] * tab[0, 0] + alpha[c - 1, 1] * tab[1, 0])
            a1 = e1 * (alpha[c - 1, 0] * tab[0, 1] + alpha[c - 1, 1] * tab[1, 1])
        s = a0 + a1
        alpha[c, 0] = a0 / s
        alpha[c, 1] = a1 / s
    c = cols - 1
    x[base + c] = 1 if u[base + c] < alpha[c, 1] else 0
    for c in range(cols - 2, -1, -1):
        nxt = x[base + c + 1]
        w0 = alpha[c, 0] * tab[0, nxt]
        w1 = alpha[c, 1] * tab[1, nxt]
        x[base + c] = 1 if u[base + c] * (w0 + w1) < w1 else 0


@numba.njit(cache=True, nogil=True)
def _edge_counts(x, edges, out):
    for t in range(4):
        out[t] = 0
    for e in range(edges.shape[0]):
        out[2 * x[edges[e, 0]] + x[edges[e, 1]]] += 1


@numba.njit(cache=True, nogil=True)
def _run_sweeps(x, rows, cols, tab, blocked, u, thinning, edges, out_bits, out_counts):
    alpha = np.empty((cols, 2))
    kept = 0
    for s in range(u.shape[0]):
        if blocked:
            for r in range(rows):
                _row_update(x, r, rows, cols, tab, u[s], alpha)
        else:
            _site_sweep(x, rows, cols, tab, u[s])
        if (s + 1) % thinning == 0 and kept < out_bits.shape[0]:
            out_bits[kept, :] = x
            _edge_counts(x, edges, out_counts[kept])
            kept += 1
    return kept


def _check_gibbs(model: GridModel):
    if model.kernel.has_zero_entry:
        raise PreconditionError("Gibbs sampling on |f| needs a kernel with no zero entries")


def gibbs_sample_abs(
    model: GridModel, cfg: SamplerConfig, count: int | None, block_size: int = DEFAULT_BLOCK
) -> Iterator[SampleBlock]:
    """Samples from ``p(x) = |f(x)| / Z_|f|`` by raster-order Gibbs sweeps.

    ``burn_in`` sweeps are discarded, then every ``thinning``-th sweep is kept.
    Endless when ``count`` is None.
    """
    _check_gibbs(model)
    kernel = model.kernel
    rng = cfg.rng()
    tab = np.ascontiguousarray(kernel.abs_table())
    edges = model.edge_array
    blocked = cfg.scheme == "row-blocked"
    n = model.n
    x = rng.integers(0, 2, size=n, dtype=np.uint8)
    sweeps_per_chunk = max(1, (1 << 20) // n)

    scratch_bits = np.empty((1, n), dtype=np.uint8)
    scratch_counts = np.empty((1, 4), dtype=np.int64)
    left = cfg.burn_in
    while left:
        m = min(left, sweeps_per_chunk)
        _run_sweeps(x, model.rows, model.cols, tab, blocked, rng.random((m, n)), 1, edges,
                    scratch_bits[:0], scratch_counts[:0])
        left -= m

    log2_flat = kernel.log2_flat
    turn_flat = kernel.turn_flat
    general = not kernel.is_quarter_turn
    done = 0
    while count is None or done < count:
        want = block_size if count is None else min(block_size, count - done)
        bits = np.empty((want, n), dtype=np.uint8)
        counts = np.empty((want, 4), dtype=np.int64)
        kept = 0
        while kept < want:
            m = min((want - kept) * cfg.thinning, sweeps_per_chunk)
            m -= m % cfg.thinning
            m = max(m, cfg.thinning)
            kept += _run_sweeps(x, model.rows, model.cols, tab, blocked, rng.random((m, n)),
                                cfg.thinning, edges, bits[kept:], counts[kept:])
        done += want
        if general:
            yield SampleBlock.from_bits(model, bits)
        else:
            log2 = counts @ log2_flat
            code = ((counts @ turn_flat) % 4).astype(np.int8)
            yield SampleBlock(bits, log2, code, np.zeros(want))


def take_bin(blocks: Iterable[SampleBlock], target: PhaseBin, count: int | None = None) -> Iterator[SampleBlock]:
    """Keep only samples in ``target``; stop after ``count`` of them."""
    got = 0
    for block in blocks:
        sub = block.select(block.mask(target))
        if count is not None and got + len(sub) >= count:
            yield sub.select(slice(0, count - got))
            return
        got += len(sub)
        if len(sub):
            yield sub


def single_site_weights(tab, rows: int, cols: int, x, i: int):
    """Unnormalised conditional weights ``(w0, w1)`` of site ``i`` given the rest.

    Pure Python so it also works on symbolic tables.
    """
    r, c = divmod(i, cols)
    w = [1, 1]
    for v in (0, 1):
        if c > 0:
            w[v] = w[v] * tab[x[i - 1]][v]
        if c + 1 < cols:
            w[v] = w[v] * tab[v][x[i + 1]]
        if r > 0:
            w[v] = w[v] * tab[x[i - cols]][v]
        if r + 1 < rows:
            w[v] = w[v] * tab[v][x[i + cols]]
    return w[0], w[1]


def sample_row_conditional(model: GridModel, x, r: int, rng: np.random.Generator) -> np.ndarray:
    """Redraw row ``r`` of ``x`` from its exact conditional given the other rows."""
    _check_gibbs(model)
    x = np.array(x, dtype=np.uint8).copy()
    alpha = np.empty((model.cols, 2))
    _row_update(x, r, model.rows, model.cols, np.ascontiguousarray(model.kernel.abs_table()),
                rng.random(model.n), alpha)
    return x


# -- binary dump -----------------------------------------------------------
# Layout (little-endian): 32-byte header
#   8s magic "FGMCDUMP" | u32 version (1) | u32 N | u64 seed | u32 chain_id |
#   u8 scheme (0 uniform, 1 single-site, 2 row-blocked) | 3 pad bytes
# then one record of ceil(N/8) bytes per sample: np.packbits(x, bitorder="little"),
# i.e. x_j is bit (j % 8) of byte j // 8.

_HEADER = struct.Struct("<8sIIQIB3x")
_MAGIC = b"FGMCDUMP"
_SCHEME_CODES = {"uniform": 0, "single-site": 1, "row-blocked": 2}


def write_sample_dump(path: str | Path, model: GridModel, cfg: SamplerConfig,
                      blocks: Iterable[SampleBlock], scheme: str | None = None) -> int:
    scheme = scheme or cfg.scheme
    written = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, model.n, int(cfg.seed) & SEED_MASK, cfg.chain_id,
                              _SCHEME_CODES[scheme]))
        for block in blocks:
            fh.write(np.packbits(block.bits, axis=1, bitorder="little").tobytes())
            written += len(block)
    return written


def read_sample_dump(path: str | Path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    magic, version, n, seed, chain_id, scheme = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path} is not an fgmc sample dump")
    width = (n + 7) // 8
    raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).reshape(-1, width)
    bits = np.unpackbits(raw, axis=1, count=n, bitorder="little")
    names = {v: k for k, v in _SCHEME_CODES.items()}
    return {"n": n, "seed": seed, "chain_id": chain_id, "scheme": names[scheme]}, bits
