"""Uniform interface over the five missing-data treatments.

Strategies: listwise deletion, per-column mean fill, bootstrap-EM multiple
imputation under a single multivariate normal, and maximum-likelihood
imputation under a normal or restricted skew-normal mixture. All
strategies are deterministic given (data, spec.seed); none ever modifies
an observed cell.
"""

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import em
from .data import IncompleteDataset
from .errors import (
    ConfigError,
    ImputationFailedError,
    NeverObservedColumnError,
    PidImputeError,
)
from .kernels import spd_cholesky

KINDS = ("listwise", "mean", "mi", "ml_mn", "ml_msn")


@dataclass(frozen=True)
class ImputerSpec:
    """Strategy tag plus its hyperparameters and seed.

    ``m`` applies to multiple imputation only; ``n_components``,
    ``max_iter`` and ``rel_tol`` to the maximum-likelihood strategies.
    A ``n_components`` of None means "number of labeled classes in the
    dataset metadata".
    """

    kind: str
    seed: int = 0
    m: int = 5
    n_components: int | None = None
    max_iter: int = 500
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown imputer kind {self.kind!r}")
        if self.kind == "mi" and self.m < 2:
            raise ConfigError("multiple imputation requires m >= 2")


@dataclass
class ImputationResult:
    """Completed dataset plus per-cell provenance.

    ``kept_rows`` indexes into the input; it is all rows for every
    strategy except listwise deletion. ``imputed_mask`` is True exactly on
    the originally missing cells of the kept rows.
    """

    completed: IncompleteDataset
    kept_rows: np.ndarray
    imputed_mask: np.ndarray
    diagnostics: dict

    @property
    def values(self) -> np.ndarray:
        return self.completed.values


def _result(data, kept, values, diagnostics) -> ImputationResult:
    kept = np.asarray(kept)
    sub = data.subset(kept)
    completed = IncompleteDataset.complete(values, sub.species, sub.momentum)
    return ImputationResult(
        completed=completed,
        kept_rows=kept,
        imputed_mask=~sub.mask,
        diagnostics=diagnostics,
    )


def listwise(data: IncompleteDataset) -> ImputationResult:
    """Keep exactly the rows whose cells are all observed."""
    kept = data.complete_row_indices()
    if kept.size == 0 and data.n_rows > 0:
        warnings.warn("listwise deletion kept zero rows", stacklevel=2)
    return _result(data, kept, data.values[kept].copy(), {})


def mean_impute(data: IncompleteDataset) -> ImputationResult:
    """Fill each missing cell with its column's observed mean."""
    counts = data.observed_column_counts()
    if np.any(counts == 0):
        col = int(np.flatnonzero(counts == 0)[0])
        raise NeverObservedColumnError(
            f"column {col} has no observed values to average", column=col
        )
    means = data.column_means()
    values = np.where(data.mask, data.values, means)
    return _result(data, np.arange(data.n_rows), values, {"column_means": means})


def _conditional_draws(data, model, rng) -> np.ndarray:
    """One completed copy of ``data``: missing cells drawn from the
    fitted single normal's conditional distribution given the row's
    observed cells (mean from the regression, covariance from the Schur
    complement), restoring residual variance."""
    record = em.e_step_mn(data, model)
    values = data.values.copy()
    patterns, inverse = np.unique(data.mask, axis=0, return_inverse=True)
    for g in range(patterns.shape[0]):
        miss = np.flatnonzero(~patterns[g])
        if miss.size == 0:
            continue
        rows = np.flatnonzero(inverse == g)
        chol = spd_cholesky(record.chat[rows[0], 0][np.ix_(miss, miss)])
        noise = rng.standard_normal((rows.size, miss.size)) @ chol.T
        values[np.ix_(rows, miss)] = record.xhat[rows, 0][:, miss] + noise
    return values


def multiple_impute(data: IncompleteDataset, spec: ImputerSpec) -> ImputationResult:
    """Bootstrap-EM multiple imputation under a single multivariate normal.

    Each of the m replicates refits the normal on a bootstrap resample of
    the rows (restoring parameter variance) and draws every originally
    missing cell from the conditional normal given the row's observed
    cells (restoring residual variance). The returned completed dataset is
    the cell-wise average of the m replicates; all m completed copies stay
    available in the diagnostics.
    """
    all_missing = ~data.mask.any(axis=1)
    completions = []
    logliks = []
    for j in range(spec.m):
        rep_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, j)))
        model = None
        for attempt in range(5):
            rows = rep_rng.integers(data.n_rows, size=data.n_rows)
            boot = data.subset(rows)
            boot_usable = boot.mask.any(axis=1)
            try:
                model = em.fit(
                    boot.subset(np.flatnonzero(boot_usable)),
                    em.MN,
                    1,
                    seed=spec.seed + 31 * j + attempt,
                    max_iter=spec.max_iter,
                    rel_tol=spec.rel_tol,
                )
                break
            except PidImputeError:
                model = None
        if model is None:
            raise ImputationFailedError(
                f"bootstrap EM failed 5 times on replicate {j}"
            )
        values = data.values.copy()
        usable = np.flatnonzero(~all_missing)
        sub = data.subset(usable)
        drawn = _conditional_draws(sub, model, rep_rng)
        values[usable] = drawn
        if all_missing.any():
            pooled_chol = spd_cholesky(model.scales[0])
            n_empty = int(all_missing.sum())
            noise = rep_rng.standard_normal((n_empty, data.n_cols)) @ pooled_chol.T
            values[all_missing] = model.locations[0] + noise
        completions.append(values)
        logliks.append(model.loglik)
    averaged = np.mean(completions, axis=0)
    averaged = np.where(data.mask, data.values, averaged)
    return _result(
        data,
        np.arange(data.n_rows),
        averaged,
        {"completions": completions, "replicate_logliks": logliks},
    )


def default_n_components(data: IncompleteDataset) -> int:
    """Number of labeled classes in the metadata (codes > 0)."""
    if data.species is None:
        raise ConfigError(
            "n_components not given and the dataset carries no class labels"
        )
    labels = np.unique(data.species[np.asarray(data.species) > 0])
    if labels.size == 0:
        raise ConfigError(
            "n_components not given and the dataset carries no class labels"
        )
    return int(labels.size)


def ml_impute(data: IncompleteDataset, spec: ImputerSpec) -> ImputationResult:
    """Fit a mixture by EM and fill with responsibility-weighted means."""
    family = em.MN if spec.kind == "ml_mn" else em.MSN
    k = spec.n_components if spec.n_components is not None else default_n_components(data)
    model = em.fit(
        data,
        family,
        k,
        seed=spec.seed,
        max_iter=spec.max_iter,
        rel_tol=spec.rel_tol,
    )
    values = em.impute(data, model)
    return _result(
        data,
        np.arange(data.n_rows),
        values,
        {
            "model": model,
            "loglik": model.loglik,
            "n_iter": model.n_iter,
            "converged": model.converged,
        },
    )


def impute_with(data: IncompleteDataset, spec: ImputerSpec) -> ImputationResult:
    """Dispatch to the strategy named by ``spec.kind``."""
    if spec.kind == "listwise":
        return listwise(data)
    if spec.kind == "mean":
        return mean_impute(data)
    if spec.kind == "mi":
        return multiple_impute(data, spec)
    return ml_impute(data, spec)


def derive_spec_seed(spec: ImputerSpec, *keys: int) -> ImputerSpec:
    """Copy of ``spec`` with a seed derived from (seed, *keys)."""
    seed = int(np.random.SeedSequence((spec.seed, *keys)).generate_state(1)[0])
    return replace(spec, seed=seed)


def save_imputation_result(prefix, result: ImputationResult, comments=None):
    """Write `<prefix>.csv` (completed data) and `<prefix>.provenance.csv`."""
    from .data import save_dataset_csv

    save_dataset_csv(f"{prefix}.csv", result.completed, comments=comments)
    with open(f"{prefix}.provenance.csv", "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        p = result.completed.n_cols
        writer.writerow(["row"] + [f"c{j + 1}" for j in range(p)])
        for i in range(result.completed.n_rows):
            writer.writerow(
                [int(result.kept_rows[i])]
                + [
                    "imputed" if result.imputed_mask[i, j] else "observed"
                    for j in range(p)
                ]
            )
