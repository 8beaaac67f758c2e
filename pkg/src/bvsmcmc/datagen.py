"""Simulated regression data and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linmodel import Dataset, center_data

__all__ = ["SimSpec", "BETA_TILDE", "generate_yang", "load_csv", "write_csv", "expand_terms"]

BETA_TILDE = np.array([2.0, -3.0, 2.0, 2.0, -3.0, 3.0, -2.0, 3.0, -2.0, 3.0])


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    snr: float
    sigma2: float = 1.0
    rho: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.p < BETA_TILDE.size:
            raise ValueError(f"p must be at least {BETA_TILDE.size}, got {self.p}")
        if self.snr < 0:
            raise ValueError(f"snr must be non-negative, got {self.snr}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not -1 < self.rho < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")

    def true_beta(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[: BETA_TILDE.size] = BETA_TILDE
        return self.snr * beta * np.sqrt(self.sigma2 * np.log(self.p) / self.n)


def generate_yang(spec: SimSpec) -> tuple[Dataset, np.ndarray]:
    """Draw (X, y) with AR(1)-correlated rows and the ten-signal coefficient pattern.

    Rows are built sequentially, ``x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j``,
    which gives unit variances and ``corr(x_i, x_j) = rho^|i-j|`` without
    factorizing a p x p covariance.
    """
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n, spec.p))
    X = np.empty_like(z)
    X[:, 0] = z[:, 0]
    tail = np.sqrt(1 - spec.rho**2)
    for j in range(1, spec.p):
        X[:, j] = spec.rho * X[:, j - 1] + tail * z[:, j]
    beta = spec.true_beta()
    y = X @ beta + np.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    names = tuple(f"x{j + 1}" for j in range(spec.p))
    return center_data(y, X, names), beta


def expand_terms(X: np.ndarray, names) -> tuple[np.ndarray, list[str]]:
    """Originals, then squares, then upper-triangle pairwise products."""
    X = np.asarray(X, dtype=float)
    names = list(names)
    p = X.shape[1]
    iu, ju = np.triu_indices(p, k=1)
    cols = [X, X**2, X[:, iu] * X[:, ju]]
    out_names = names + [f"{a}^2" for a in names] + [f"{names[i]}*{names[j]}" for i, j in zip(iu, ju)]
    return np.hstack(cols), out_names


def load_csv(path, response: str, standardize: bool = False, expand: bool = False) -> Dataset:
    """Read a header-first numeric CSV; ``response`` becomes y, all other columns X."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if response not in header:
            raise ValueError(f"{path}: response column {response!r} not found in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}: row {lineno}, column {col!r}: non-numeric value {cell!r}") from None
            rows.append(vals)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two data rows, got {len(rows)}")
    data = np.array(rows)
    r = header.index(response)
    y = data[:, r]
    X = np.delete(data, r, axis=1)
    names = [h for i, h in enumerate(header) if i != r]
    if not names:
        raise ValueError(f"{path}: no covariate columns besides {response!r}")
    if expand:
        X, names = expand_terms(X, names)
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    return center_data(y, X, names)


def write_csv(path, data: Dataset, response: str = "y") -> Path:
    """Write ``data`` with the response first; floats use shortest round-trip repr."""
    path = Path(path)
    names = data.column_names or tuple(f"x{j + 1}" for j in range(data.p))
    if response in names:
        raise ValueError(f"response name {response!r} clashes with a covariate name")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response, *names])
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])
    return path
