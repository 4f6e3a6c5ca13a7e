"""Augmented design matrices built from propagated covariates.

A :class:`PropagatedDesign` stacks the blocks ``X, WX, ..., W^K X`` and
tracks, for every column, which propagation order and covariate it came
from.  Forward selection screens out (nearly) linearly dependent columns;
centering removes column means, which is the projection that kills the
intercept for the Gaussian family.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DegenerateDesignError
from .graph import RowStochasticOperator, propagate

DEFAULT_SELECT_TOL = 1e-8


@dataclass(eq=False)
class PropagatedDesign:
    """Stacked propagated covariate blocks with column provenance.

    ``provenance[c] == (k, j)`` means column c is covariate j diffused k
    steps.  ``selected`` lists the column indices admitted by forward
    selection, in scan order; ``column_means`` records the means subtracted
    when the design was centered (needed to center new rows consistently
    at prediction time).
    """

    blocks: list[np.ndarray]
    provenance: list[tuple[int, int]]
    selected: list[int] | None = None
    centered: bool = False
    column_means: np.ndarray | None = None
    _stacked: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def d(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def k_max(self) -> int:
        return len(self.blocks) - 1

    @property
    def n_columns(self) -> int:
        return len(self.provenance)

    def full_matrix(self) -> np.ndarray:
        """All columns, stacked in provenance order (cached)."""
        if self._stacked is None:
            self._stacked = np.hstack(self.blocks)
        return self._stacked

    def selected_matrix(self) -> np.ndarray:
        if self.selected is None:
            raise ValueError("design has not been forward-selected")
        return self.full_matrix()[:, self.selected]

    def column_names(self) -> list[str]:
        """Provenance-derived names, ``k{order}_x{covariate}`` (1-based x)."""
        return [f"k{k}_x{j + 1}" for k, j in self.provenance]

    def subset_rows(self, rows) -> "PropagatedDesign":
        """New design restricted to the given rows.

        Provenance, selection and centering metadata carry over unchanged;
        ``column_means`` still describes the transform originally applied,
        not the subset's own means.
        """
        rows = np.asarray(rows)
        return PropagatedDesign(
            blocks=[b[rows] for b in self.blocks],
            provenance=list(self.provenance),
            selected=None if self.selected is None else list(self.selected),
            centered=self.centered,
            column_means=None if self.column_means is None else self.column_means.copy(),
        )


def build_design(W: RowStochasticOperator, X: np.ndarray, K: int) -> PropagatedDesign:
    """Stack ``(X, WX, ..., W^K X)`` into an uncentered, unselected design."""
    blocks = propagate(W, X, K)
    d = blocks[0].shape[1]
    provenance = [(k, j) for k in range(K + 1) for j in range(d)]
    return PropagatedDesign(blocks=blocks, provenance=provenance)


def center(design: PropagatedDesign) -> PropagatedDesign:
    """Subtract each column's mean (the projection ``I - 11'/N``).

    Idempotent up to floating point; the subtracted means are stored so new
    rows can be centered the same way later.
    """
    means = np.concatenate([b.mean(axis=0) for b in design.blocks])
    d = design.d
    blocks = [b - means[k * d:(k + 1) * d] for k, b in enumerate(design.blocks)]
    prior = design.column_means if design.column_means is not None else 0.0
    return replace(
        design,
        blocks=blocks,
        centered=True,
        column_means=prior + means,
        _stacked=None,
    )


def center_response(y: np.ndarray) -> np.ndarray:
    """Return ``y`` with its mean removed."""
    y = np.asarray(y, dtype=np.float64)
    return y - y.mean()


def forward_select(design: PropagatedDesign, tol: float = DEFAULT_SELECT_TOL) -> PropagatedDesign:
    """Greedy screening of linearly independent columns.

    Columns are scanned in provenance order (ascending propagation order,
    covariates within); a column is admitted iff the norm of its residual
    after orthogonal projection onto the already-admitted span exceeds
    ``tol`` times the column's own norm.  Modified Gram-Schmidt with one
    re-orthogonalization pass keeps the admitted basis numerically sound.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = design.full_matrix()
    n, p = M.shape
    basis = np.empty((n, min(n, p)), dtype=np.float64)
    n_basis = 0
    selected: list[int] = []
    for idx in range(p):
        v = M[:, idx]
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        r = v.copy()
        for _ in range(2):  # second pass guards against cancellation
            if n_basis:
                Q = basis[:, :n_basis]
                r -= Q @ (Q.T @ r)
        rnorm = np.linalg.norm(r)
        if rnorm > tol * norm0:
            selected.append(idx)
            if n_basis < basis.shape[1]:
                basis[:, n_basis] = r / rnorm
                n_basis += 1
    if not selected:
        raise DegenerateDesignError("degenerate design: no independent columns")
    return replace(design, selected=selected)


def read_covariates(path, allow_empty: bool = False) -> np.ndarray:
    """Read an N x d covariate matrix from a CSV with header ``x1..xd``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = [f"x{i + 1}" for i in range(len(header))]
        if header != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}")
        d = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != d:
                raise ValueError(f"{path}:{lineno}: expected {d} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        if allow_empty:
            return np.empty((0, d), dtype=np.float64)
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def write_design_csv(path, design: PropagatedDesign) -> None:
    """Diagnostic export of all columns under their provenance names."""
    M = design.full_matrix()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(design.column_names())
        for row in M:
            writer.writerow([repr(float(v)) for v in row])
