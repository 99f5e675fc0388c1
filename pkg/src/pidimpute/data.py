"""Incomplete-dataset container and its CSV interchange format.

The on-disk format is one row per event:

    species,p,e1,...,ep,m1,...,mp

where ``e_j`` is the normalized log energy loss (empty field when the cell
is missing), ``m_j`` in {0, 1} flags observed cells, ``species`` is the
integer class code (0 when unlabeled) and ``p`` the momentum in GeV/c with
6 significant digits. Files may start with ``#``-prefixed provenance
comment lines.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatchError


@dataclass
class IncompleteDataset:
    """N x p real matrix with a per-cell observation mask.

    ``values`` carries NaN in missing cells; those entries are never read.
    ``mask`` is True where a cell is observed. ``species`` (integer codes)
    and ``momentum`` (GeV/c) are optional per-row metadata.
    """

    values: np.ndarray
    mask: np.ndarray
    species: np.ndarray | None = None
    momentum: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise SchemaMismatchError(
                f"values {self.values.shape} and mask {self.mask.shape} must be "
                "congruent 2-D arrays"
            )
        for name in ("species", "momentum"):
            meta = getattr(self, name)
            if meta is not None:
                meta = np.asarray(meta)
                if meta.shape != (self.n_rows,):
                    raise SchemaMismatchError(
                        f"{name} has shape {meta.shape}, expected ({self.n_rows},)"
                    )
                setattr(self, name, meta)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def complete(cls, values, species=None, momentum=None) -> "IncompleteDataset":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool), species, momentum)

    @classmethod
    def from_values(cls, values, species=None, momentum=None) -> "IncompleteDataset":
        """Build from an array using NaN as the missing-cell marker."""
        values = np.asarray(values, dtype=float)
        return cls(values, ~np.isnan(values), species, momentum)

    def complete_row_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.all(axis=1))

    def observed_column_counts(self) -> np.ndarray:
        return self.mask.sum(axis=0)

    def column_means(self) -> np.ndarray:
        """Per-column mean over observed cells only (NaN if never observed)."""
        with np.errstate(invalid="ignore"):
            filled = np.where(self.mask, self.values, np.nan)
            return np.nanmean(filled, axis=0)

    def subset(self, rows) -> "IncompleteDataset":
        rows = np.asarray(rows)
        return IncompleteDataset(
            self.values[rows].copy(),
            self.mask[rows].copy(),
            None if self.species is None else self.species[rows].copy(),
            None if self.momentum is None else self.momentum[rows].copy(),
        )

    def copy(self) -> "IncompleteDataset":
        return self.subset(np.arange(self.n_rows))


def dataset_header(p: int) -> list[str]:
    return (
        ["species", "p"]
        + [f"e{j + 1}" for j in range(p)]
        + [f"m{j + 1}" for j in range(p)]
    )


def save_dataset_csv(path, ds: IncompleteDataset, comments: list[str] | None = None):
    """Write a dataset in the interchange format (deterministic bytes)."""
    species = ds.species if ds.species is not None else np.zeros(ds.n_rows, dtype=int)
    momentum = ds.momentum if ds.momentum is not None else np.zeros(ds.n_rows)
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(dataset_header(ds.n_cols))
        for i in range(ds.n_rows):
            row = [str(int(species[i])), f"{momentum[i]:.6g}"]
            for j in range(ds.n_cols):
                row.append(repr(float(ds.values[i, j])) if ds.mask[i, j] else "")
            row.extend(str(int(ds.mask[i, j])) for j in range(ds.n_cols))
            writer.writerow(row)


def load_dataset_csv(path) -> IncompleteDataset:
    """Read a dataset written by :func:`save_dataset_csv`."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaMismatchError(f"{path}: empty dataset file")
    header = rows[0]
    if len(header) < 2 or header[:2] != ["species", "p"]:
        raise SchemaMismatchError(f"{path}: unexpected header {header[:4]}")
    p = (len(header) - 2) // 2
    if header != dataset_header(p):
        raise SchemaMismatchError(f"{path}: malformed header for p={p}")
    n = len(rows) - 1
    values = np.full((n, p), np.nan)
    mask = np.zeros((n, p), dtype=bool)
    species = np.zeros(n, dtype=int)
    momentum = np.zeros(n)
    for i, row in enumerate(rows[1:]):
        species[i] = int(row[0])
        momentum[i] = float(row[1])
        for j in range(p):
            mask[i, j] = row[2 + p + j] == "1"
            if mask[i, j]:
                values[i, j] = float(row[2 + j])
    return IncompleteDataset(values, mask, species, momentum)
