"""Multi-chain experiment runner: traces, summaries and files on disk."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PreconditionError, UnsupportedEstimatorError
from .estimators import (
    ESTIMATORS,
    EstimatorTrace,
    assemble_Zf,
    checkpoints,
    combine_chains,
    count_bins_absgibbs,
    count_bins_uniform,
    estimate_Z_ogata_tanemura,
    estimate_Z_uniform,
    DEFAULT_CHECKPOINTS,
)
from .exact import TRANSFER_MAX_COLS, PartitionSummary, exact_summary
from .graph import EXACT_BINS, GridModel, PhaseBin
from .samplers import (
    DEFAULT_MAX_DRAWS,
    SamplerConfig,
    gibbs_sample_abs,
    take_bin,
    uniform_bin_sample,
    uniform_sample,
)


@dataclass
class ExperimentConfig:
    model: GridModel
    estimator: str = "uniform_z"
    target: str = "plus"
    K: int = 10**5
    chains: int = 10
    seed: int = 0
    burn_in: int = 100
    thinning: int = 1
    scheme: str = "single-site"
    bin_count: str = "exact"
    count_K: int | None = None
    workers: int | None = None
    n_points: int = DEFAULT_CHECKPOINTS
    max_draws: int = DEFAULT_MAX_DRAWS
    max_cols: int = TRANSFER_MAX_COLS
    out_dir: Path | None = None
    plot: bool = True
    reported_value: float | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.target != "all":
            PhaseBin.from_name(self.target)

    def sampler(self, chain_id: int) -> SamplerConfig:
        return SamplerConfig(self.seed, chain_id, self.burn_in, self.thinning, self.scheme)

    @property
    def bins(self) -> list[PhaseBin]:
        if self.target == "all":
            return list(EXACT_BINS)
        return [PhaseBin.from_name(self.target)]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[EstimatorTrace]
    summary: dict
    bin_traces: dict = field(default_factory=dict)
    exact: PartitionSummary | None = None
    files: dict = field(default_factory=dict)


def check_compatibility(cfg: ExperimentConfig):
    """Raise before any sampling if the estimator cannot run on this kernel."""
    kernel = cfg.model.kernel
    if cfg.estimator == "count_absgibbs":
        if not kernel.is_real:
            raise UnsupportedEstimatorError(
                "count_absgibbs handles real kernels only; use --estimator count_uniform"
            )
        if kernel.has_zero_entry:
            raise PreconditionError("count_absgibbs requires a kernel without zero entries")
    if cfg.estimator == "ogata_tanemura" and kernel.has_zero_entry:
        raise PreconditionError("ogata_tanemura requires a kernel without zero entries")
    if cfg.estimator in ("uniform_z", "ogata_tanemura") and cfg.bin_count not in ("exact", "estimate"):
        int(cfg.bin_count)


def _exact_reference(cfg: ExperimentConfig) -> PartitionSummary | None:
    model = cfg.model
    if model.kernel.is_quarter_turn and model.cols <= cfg.max_cols:
        from .exact import transfer_matrix_summary

        return transfer_matrix_summary(model, max_cols=cfg.max_cols)
    if model.n <= 20:
        return exact_summary(model, "brute")
    return None


def _count_chain(cfg: ExperimentConfig, chain_id: int, K: int):
    model = cfg.model
    return count_bins_uniform(
        model, uniform_sample(model, cfg.sampler(chain_id), K), chain_id, checkpoints(K, cfg.n_points)
    )


def _resolve_bin_counts(cfg: ExperimentConfig, exact: PartitionSummary | None, pool) -> tuple[dict, dict]:
    """Bin sizes fed to the Z estimators, plus a record of how they were obtained."""
    if cfg.bin_count == "exact":
        if exact is None:
            raise PreconditionError(
                "no exact bin count available for this model; pass --bin-count estimate or an integer"
            )
        return {b: exact.count(b) for b in cfg.bins}, {"source": "exact"}
    if cfg.bin_count == "estimate":
        K = cfg.count_K or cfg.K
        # Stage-one chains use ids offset past the stage-two chains.
        runs = list(pool.map(lambda c: _count_chain(cfg, cfg.chains + c, K), range(cfg.chains)))
        out, stage = {}, {"source": "estimate", "K": K, "bins": {}}
        for b in cfg.bins:
            est = combine_chains(r[b].final for r in runs)
            out[b] = est.value.real
            stage["bins"][b.name] = {"mean": est.value.real, "stderr": est.stderr}
        return out, stage
    value = int(cfg.bin_count)
    return {b: value for b in cfg.bins}, {"source": "given"}


def _z_chain(cfg: ExperimentConfig, chain_id: int, target: PhaseBin, bin_count) -> EstimatorTrace:
    model = cfg.model
    scfg = cfg.sampler(chain_id)
    pts = checkpoints(cfg.K, cfg.n_points)
    if cfg.estimator == "uniform_z":
        stream = uniform_bin_sample(model, scfg, target, cfg.K, max_draws=cfg.max_draws)
        tr = estimate_Z_uniform(model, target, bin_count, stream, chain_id, pts)
        tr.extra["acceptance_rate"] = stream.acceptance_rate
        return tr
    stream = take_bin(gibbs_sample_abs(model, scfg, None), target, cfg.K)
    return estimate_Z_ogata_tanemura(model, target, bin_count, stream, chain_id, pts)


def _chain_record(tr: EstimatorTrace, n: int) -> dict:
    v = tr.final
    return {
        "chain_id": tr.chain_id,
        "log2": _num(tr.final_log2),
        "log2_per_site": _num(tr.final_log2 / n),
        "value": [_num(v.real), _num(v.imag)],
    }


def _num(x):
    x = float(x)
    return None if not math.isfinite(x) else x


def _estimate_record(finals, n: int) -> dict:
    est = combine_chains(finals)
    mag = abs(est.value)
    return {
        "mean": [_num(est.value.real), _num(est.value.imag)],
        "stderr": _num(est.stderr),
        "log2_mean": _num(math.log2(mag)) if mag > 0 else None,
        "log2_mean_per_site": _num(math.log2(mag) / n) if mag > 0 else None,
    }


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    check_compatibility(cfg)
    model = cfg.model
    n = model.n
    workers = cfg.workers or os.cpu_count() or 1
    exact = _exact_reference(cfg)
    summary: dict = {
        "model": {"rows": model.rows, "cols": model.cols, "kernel": model.kernel.to_json()},
        "estimator": cfg.estimator,
        "K": cfg.K,
        "chains": cfg.chains,
        "seed": cfg.seed,
        "sampler": {"burn_in": cfg.burn_in, "thinning": cfg.thinning, "scheme": cfg.scheme},
        "bins": {},
        "cancellation": None,
    }
    plot_traces: list[EstimatorTrace] = []
    bin_traces: dict[str, list[EstimatorTrace]] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        if cfg.estimator in ("uniform_z", "ogata_tanemura"):
            counts, stage = _resolve_bin_counts(cfg, exact, pool)
            summary["bin_count"] = {**stage, "values": {b.name: str(c) for b, c in counts.items()}}
            per_bin = {}
            for b in cfg.bins:
                if counts[b] == 0:
                    continue
                traces = list(pool.map(lambda c: _z_chain(cfg, c, b, counts[b]), range(cfg.chains)))
                bin_traces[b.name] = traces
                if not plot_traces:
                    plot_traces = traces
                rec = _estimate_record([t.final for t in traces], n)
                rec["chains"] = [_chain_record(t, n) for t in traces]
                if exact is not None:
                    rec["exact_log2_per_site"] = _num(exact.log2_z(b) / n)
                if cfg.estimator == "ogata_tanemura":
                    rec["gamma_chains"] = [_num(t.extra["gamma_log2"][-1]) for t in traces]
                else:
                    rec["acceptance_rates"] = [t.extra["acceptance_rate"] for t in traces]
                summary["bins"][b.name] = rec
                per_bin[b] = combine_chains(t.final for t in traces)
            if cfg.target == "all":
                required = [b for b in EXACT_BINS if counts[b] > 0]
                with warnings.catch_warnings(record=True):
                    warnings.simplefilter("always")
                    zf = assemble_Zf(per_bin, required)
                summary["z_f"] = zf.to_json()
                summary["cancellation"] = zf.cancellation
        else:
            K = cfg.K
            if cfg.estimator == "count_uniform":
                runs = list(pool.map(lambda c: _count_chain(cfg, c, K), range(cfg.chains)))
                by_bin = {b: [r[b] for r in runs] for b in runs[0]}
            else:
                def one(c):
                    stream = gibbs_sample_abs(model, cfg.sampler(c), K)
                    return count_bins_absgibbs(model, stream, c, checkpoints(K, cfg.n_points))

                runs = list(pool.map(one, range(cfg.chains)))
                by_bin = {b: [r.count_traces[b] for r in runs] for b in runs[0].count_traces}
                summary["lambda_chains"] = [_num(r.lambda_trace.final.real) for r in runs]
                summary["gamma_chains"] = [_num(r.gamma_trace.final.real) for r in runs]
            for b, traces in by_bin.items():
                rec = _estimate_record([t.final for t in traces], n)
                rec["log2_chains"] = [_num(t.final_log2) for t in traces]
                if exact is not None:
                    c = exact.count(b) if b.name != "zero" else exact.zero_count
                    rec["exact"] = str(c)
                    rec["exact_log2"] = _num(math.log2(c)) if c > 0 else None
                summary["bins"][b.name] = rec
            plot_traces = by_bin.get(cfg.bins[0], [])
            bin_traces[cfg.bins[0].name] = plot_traces
    result = ExperimentResult(cfg, plot_traces, summary, bin_traces, exact)
    if cfg.out_dir is not None:
        write_outputs(result)
    return result


def write_trace_csv(traces, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain_id", "k", "estimate_log2", "estimate_re", "estimate_im"])
        for tr in sorted(traces, key=lambda t: t.chain_id):
            vals = tr.values
            for k, lg, v in zip(tr.k, tr.log2, vals):
                w.writerow([tr.chain_id, int(k), repr(float(lg)), repr(float(v.real)), repr(float(v.imag))])


def write_outputs(result: ExperimentResult) -> dict:
    cfg = result.config
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    trace_path = out / "trace.csv"
    write_trace_csv(result.traces, trace_path)
    files["trace"] = trace_path
    if len(result.bin_traces) > 1:
        for name, traces in result.bin_traces.items():
            p = out / f"trace_{name}.csv"
            write_trace_csv(traces, p)
            files[f"trace_{name}"] = p
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(result.summary, indent=2) + "\n")
    files["summary"] = summary_path
    if cfg.plot and result.traces:
        from .plotting import plot_traces

        n = cfg.model.n
        target = cfg.bins[0]
        if cfg.estimator in ("uniform_z", "ogata_tanemura"):
            per_site, ylabel = n, r"$\frac{1}{N}\log_2 \hat Z_{%s}$" % target.name.replace("_", r"\_")
            ref = result.exact.log2_z(target) / n if result.exact is not None else None
        else:
            per_site, ylabel = None, r"$\log_2 \hat\xi_{%s}$" % target.name.replace("_", r"\_")
            ref = None
            if result.exact is not None and result.exact.count(target) > 0:
                ref = math.log2(result.exact.count(target))
        title = f"{cfg.model.label()}, {cfg.estimator}, K={cfg.K}, {cfg.chains} chains"
        files["plot"] = plot_traces(
            result.traces, out / "trace.svg", per_site, ylabel, title, ref, reported_value=cfg.reported_value
        )
    result.files = files
    return files
