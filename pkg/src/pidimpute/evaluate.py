"""Sweep harness: efficiency, purity and imputation error across
(momentum bin, strategy, missing fraction) cells.

Each cell draws masked test samples from its bin's pool, imputes them with
the strategy under test, classifies the completed rows with the bin's
trained net, and aggregates mean +- sd over the samples. Every random
stream is derived from (master seed, bin, strategy, eta, sample index), so
results are independent of execution order and worker count.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import csv
import numpy as np

from .data import IncompleteDataset
from .errors import ParameterDomainError, PidImputeError
from .imputers import ImputerSpec, impute_with
from .network import TrainedNet, classify
from .telescope import (
    EventSample,
    MissingnessSpec,
    SPECIES_CODES,
    SPECIES_NAMES,
    make_test_samples,
)

STRATEGY_ORDER = {"listwise": 0, "mean": 1, "mi": 2, "ml_mn": 3, "ml_msn": 4}


@dataclass
class ConfusionTable:
    """3x3 counts, rows = true species, columns = assigned species."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (3, 3) or np.any(self.counts < 0):
            raise ParameterDomainError("confusion table must be 3x3 non-negative")

    @classmethod
    def from_labels(cls, true_species, assigned) -> "ConfusionTable":
        true_species = np.asarray(true_species, dtype=int)
        assigned = np.asarray(assigned, dtype=int)
        counts = np.zeros((3, 3), dtype=int)
        for t in SPECIES_CODES:
            for a in SPECIES_CODES:
                counts[t - 1, a - 1] = int(np.sum((true_species == t) & (assigned == a)))
        return cls(counts)

    def true_count(self, species: int) -> int:
        return int(self.counts[species - 1].sum())

    def assigned_count(self, species: int) -> int:
        return int(self.counts[:, species - 1].sum())

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0


def efficiency(table: ConfusionTable, species: int):
    """Correctly-assigned / true count; None (absent) when no true rows."""
    n_true = table.true_count(species)
    if n_true == 0:
        return None
    return table.counts[species - 1, species - 1] / n_true


def purity(table: ConfusionTable, species: int):
    """Correctly-assigned / assigned count; None when nothing assigned."""
    n_assigned = table.assigned_count(species)
    if n_assigned == 0:
        return None
    return table.counts[species - 1, species - 1] / n_assigned


def avg_quadratic_diff(true_values, imputed_values, missing_mask) -> float:
    """RMS of (true - imputed) over the originally missing cells.

    Defined as 0 when no cell is missing. Pooled across species and
    columns, matching the overall-average reading of the error surface.
    """
    true_values = np.asarray(true_values, dtype=float)
    imputed_values = np.asarray(imputed_values, dtype=float)
    missing_mask = np.asarray(missing_mask, dtype=bool)
    if true_values.shape != imputed_values.shape or true_values.shape != missing_mask.shape:
        raise ParameterDomainError("shapes of truth, imputation and mask must agree")
    if not missing_mask.any():
        return 0.0
    diff = true_values[missing_mask] - imputed_values[missing_mask]
    return float(np.sqrt(np.mean(diff**2)))


@dataclass
class BinContext:
    """Everything a sweep cell needs about one momentum bin."""

    lo: float
    hi: float
    pool: EventSample
    net: TrainedNet


@dataclass
class SweepResult:
    """Aggregated outcome of one (bin, strategy, eta) cell.

    ``efficiency`` and ``purity`` map species code to (mean, sd) or None
    when the quantity was absent in every sample. ``error`` is set (and
    the statistics are empty) when the cell failed.
    """

    bin_lo: float
    bin_hi: float
    strategy: str
    eta: float
    n_samples: int
    efficiency: dict | None = None
    purity: dict | None = None
    rms: tuple | None = None
    error: str | None = None


def _aggregate(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    arr = np.asarray(vals, dtype=float)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def _cell_seed(master_seed, bin_lo, strategy_kind, eta, *extra) -> tuple:
    return (
        int(master_seed),
        int(round(bin_lo * 1000)),
        STRATEGY_ORDER[strategy_kind],
        int(round(eta * 1_000_000)),
        *extra,
    )


def run_cell(
    ctx: BinContext,
    strategy: ImputerSpec,
    eta: float,
    n_samples: int,
    sample_size: int,
    master_seed: int,
    mechanism: MissingnessSpec = MissingnessSpec(),
) -> SweepResult:
    """Evaluate one (bin, strategy, eta) cell over its test samples."""
    if n_samples < 2:
        raise ParameterDomainError("n_samples must be >= 2 for sd estimates")
    base = _cell_seed(master_seed, ctx.lo, strategy.kind, eta)
    cell_key = int(np.random.SeedSequence(base).generate_state(1)[0])
    miss = replace(mechanism, eta=eta, seed=cell_key)
    samples = make_test_samples(ctx.pool, n_samples, sample_size, miss, cell_key)

    eff_lists = {s: [] for s in SPECIES_CODES}
    pur_lists = {s: [] for s in SPECIES_CODES}
    rms_list = []
    for s_idx, sample in enumerate(samples):
        spec_s = replace(
            strategy,
            seed=int(
                np.random.SeedSequence(base + (0xA11, s_idx)).generate_state(1)[0]
            ),
        )
        result = impute_with(sample.data, spec_s)
        completed = result.completed
        assigned = classify(ctx.net, ctx.net.cuts, completed.values)
        table = ConfusionTable.from_labels(completed.species, assigned)
        for s in SPECIES_CODES:
            eff_lists[s].append(efficiency(table, s))
            pur_lists[s].append(purity(table, s))
        truth = sample.truth[result.kept_rows]
        rms_list.append(
            avg_quadratic_diff(truth, completed.values, result.imputed_mask)
        )

    return SweepResult(
        bin_lo=ctx.lo,
        bin_hi=ctx.hi,
        strategy=strategy.kind,
        eta=eta,
        n_samples=n_samples,
        efficiency={s: _aggregate(eff_lists[s]) for s in SPECIES_CODES},
        purity={s: _aggregate(pur_lists[s]) for s in SPECIES_CODES},
        rms=_aggregate(rms_list),
    )


def _run_cell_task(args):
    idx, ctx, strategy, eta, n_samples, sample_size, master_seed, mechanism = args
    try:
        return idx, run_cell(
            ctx, strategy, eta, n_samples, sample_size, master_seed, mechanism
        )
    except (PidImputeError, np.linalg.LinAlgError) as exc:
        return idx, SweepResult(
            bin_lo=ctx.lo,
            bin_hi=ctx.hi,
            strategy=strategy.kind,
            eta=eta,
            n_samples=n_samples,
            error=f"{type(exc).__name__}: {exc}",
        )


def plan_cells(bins, strategies, etas):
    """Deterministic cell ordering: bins, then strategies, then etas."""
    return [
        (b, strat, float(eta)) for b in bins for strat in strategies for eta in etas
    ]


def run_sweep(
    bins,
    strategies,
    etas,
    n_samples: int,
    sample_size: int,
    master_seed: int,
    mechanism: MissingnessSpec = MissingnessSpec(),
    threads: int = 1,
) -> list:
    """Run every (bin, strategy, eta) cell; failures are recorded in their
    SweepResult rather than aborting the sweep. Output order and values
    are independent of ``threads``."""
    cells = plan_cells(bins, strategies, etas)
    tasks = [
        (i, ctx, strat, eta, n_samples, sample_size, master_seed, mechanism)
        for i, (ctx, strat, eta) in enumerate(cells)
    ]
    results = [None] * len(tasks)
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for idx, res in pool.map(_run_cell_task, tasks):
                results[idx] = res
    else:
        for task in tasks:
            idx, res = _run_cell_task(task)
            results[idx] = res
    return results


RESULTS_HEADER = [
    "bin_lo",
    "bin_hi",
    "strategy",
    "eta",
    "species",
    "efficiency",
    "eff_sd",
    "purity",
    "pur_sd",
    "rms_diff",
    "rms_sd",
    "n_samples",
]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_results_csv(path, results, comments=None):
    """Long-format results: one row per (cell, species) plus an `all` row
    carrying the cell's RMS imputation error. Failed cells are skipped
    here; report them separately."""
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for res in results:
            if res.error is not None:
                continue
            head = [f"{res.bin_lo:g}", f"{res.bin_hi:g}", res.strategy, f"{res.eta:g}"]
            for s in SPECIES_CODES:
                eff = res.efficiency[s]
                pur = res.purity[s]
                writer.writerow(
                    head
                    + [SPECIES_NAMES[s]]
                    + [_fmt(eff and eff[0]), _fmt(eff and eff[1])]
                    + [_fmt(pur and pur[0]), _fmt(pur and pur[1])]
                    + ["", "", str(res.n_samples)]
                )
            writer.writerow(
                head
                + ["all", "", "", "", ""]
                + [_fmt(res.rms and res.rms[0]), _fmt(res.rms and res.rms[1])]
                + [str(res.n_samples)]
            )


def load_results_csv(path) -> list:
    """Rows as dicts with floats where present, None where empty."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0] != RESULTS_HEADER:
        raise ParameterDomainError(f"{path}: malformed results header")
    out = []
    for row in rows[1:]:
        rec = dict(zip(RESULTS_HEADER, row))
        for key in RESULTS_HEADER:
            if key in ("strategy", "species"):
                continue
            rec[key] = float(rec[key]) if rec[key] != "" else None
        rec["n_samples"] = int(rec["n_samples"]) if rec["n_samples"] else None
        out.append(rec)
    return out
