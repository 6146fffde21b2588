"""Synthetic regression data, CSV ingestion, splitting, and residual reports.

All randomness flows through one 64-bit seed, split per purpose with
``numpy.random.SeedSequence`` (see :func:`seed_streams`), so a run is fully
reproducible from its seed.  Cross-platform bitwise equality is not promised;
statistical equivalence is.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .superquantile import quantile

__all__ = [
    "DataFormatError",
    "EmptyDatasetError",
    "MissingColumnError",
    "NonNumericCellError",
    "QuantileReport",
    "SyntheticSpec",
    "append_intercept",
    "generate_low_rank",
    "generate_targets",
    "load_csv",
    "residual_quantile_report",
    "resolve_w_bar",
    "save_csv",
    "seed_streams",
    "train_test_split",
]


class DataFormatError(ValueError):
    """Malformed tabular input."""


class MissingColumnError(DataFormatError):
    """The requested target column is not in the header."""


class NonNumericCellError(DataFormatError):
    """A data cell failed to parse as a number."""

    def __init__(self, message: str, row: int):
        super().__init__(message)
        self.row = row


class EmptyDatasetError(DataFormatError):
    """The file holds a header but no data rows."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Settings for the synthetic low-rank regression corpus.

    Targets are a linear signal plus mixture noise: with probability
    ``bernoulli_p`` a standard normal draw, otherwise a Laplace draw with the
    given location and scale.  ``w_bar`` defaults to a seeded standard normal
    vector (see :func:`resolve_w_bar`).
    """

    n: int = 10000
    d: int = 40
    effective_rank: int = 30
    w_bar: np.ndarray | None = field(default=None, repr=False)
    bernoulli_p: float = 0.8
    laplace_loc: float = 10.0
    laplace_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if not 1 <= self.effective_rank <= self.d:
            raise ValueError(
                f"effective_rank must lie in [1, d={self.d}], got {self.effective_rank}"
            )
        if not 0.0 <= self.bernoulli_p <= 1.0:
            raise ValueError(f"bernoulli_p must lie in [0, 1], got {self.bernoulli_p}")
        if self.laplace_scale < 0.0:
            raise ValueError(f"laplace_scale must be nonnegative, got {self.laplace_scale}")


_STREAMS = ("train_matrix", "test_matrix", "w_bar", "train_noise", "test_noise", "split")


def seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Split one master seed into independent per-purpose seed sequences."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return dict(zip(_STREAMS, children))


def generate_low_rank(n: int, d: int, effective_rank: int, seed) -> np.ndarray:
    """Random n-by-d matrix whose spectrum decays past ``effective_rank``.

    Built as U diag(s) V^T with orthonormal factors from QR of seeded Gaussian
    matrices and a bell-shaped singular-value profile
    exp(-(k / rank)^2) + 0.01 * exp(-k / rank), so the top ``effective_rank``
    singular values carry nearly all of the squared spectrum.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not 1 <= effective_rank <= d:
        raise ValueError(f"effective_rank must lie in [1, d={d}], got {effective_rank}")
    rng = np.random.default_rng(seed)
    m = min(n, d)
    U, _ = np.linalg.qr(rng.standard_normal((n, m)))
    V, _ = np.linalg.qr(rng.standard_normal((d, m)))
    k = np.arange(m)
    s = np.exp(-((k / effective_rank) ** 2)) + 0.01 * np.exp(-k / effective_rank)
    return (U * s) @ V.T


def _laplace_inverse_cdf(u: np.ndarray, loc: float, scale: float) -> np.ndarray:
    # Inverse-CDF sampling keeps draws deterministic for a given generator.
    t = u - 0.5
    mag = np.maximum(1.0 - 2.0 * np.abs(t), np.finfo(float).tiny)
    return loc - scale * np.sign(t) * np.log(mag)


def resolve_w_bar(spec: SyntheticSpec, seed) -> np.ndarray:
    """The spec's ground-truth parameters, drawing a seeded default if unset."""
    if spec.w_bar is not None:
        w = np.asarray(spec.w_bar, dtype=float)
        if w.shape != (spec.d,):
            raise ValueError(f"w_bar has shape {w.shape}, expected ({spec.d},)")
        return w
    return np.random.default_rng(seed).standard_normal(spec.d)


def generate_targets(X: np.ndarray, w_bar: np.ndarray, spec: SyntheticSpec, seed=None) -> np.ndarray:
    """Targets X @ w_bar plus per-sample normal/Laplace mixture noise.

    All three draws (mixture flag, normal, Laplace) are made independently for
    every sample from the generator seeded by ``seed`` (default: the spec's).
    """
    X = np.asarray(X, dtype=float)
    w_bar = np.asarray(w_bar, dtype=float)
    if X.shape[1] != w_bar.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns but w_bar has length {w_bar.shape[0]}")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n = X.shape[0]
    gaussian = rng.random(n) < spec.bernoulli_p
    eps_normal = rng.standard_normal(n)
    eps_laplace = _laplace_inverse_cdf(rng.random(n), spec.laplace_loc, spec.laplace_scale)
    return X @ w_bar + np.where(gaussian, eps_normal, eps_laplace)


def save_csv(data: Dataset, path, target_column: str = "target") -> None:
    """Write the dataset with a header row and 17-significant-digit values.

    Feature columns are named x0..x{d-1}; 17 digits make the save/load round
    trip exact for float64.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(data.d)] + [target_column])
        for i in range(data.n):
            row = [f"{v:.17g}" for v in data.features[i]]
            row.append(f"{data.targets[i]:.17g}")
            writer.writerow(row)


def load_csv(path, target_column: str = "target") -> Dataset:
    """Read a headered numeric CSV into a dataset.

    Raises FileNotFoundError for a missing file, :class:`MissingColumnError`
    if the target column is absent, :class:`EmptyDatasetError` for a file with
    no data rows, and :class:`NonNumericCellError` naming the 1-based data row
    of the first cell that fails to parse.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path}: empty dataset (no header row)")
        header = [h.strip() for h in header]
        if target_column not in header:
            raise MissingColumnError(
                f"{path}: target column {target_column!r} not found in header {header}"
            )
        tidx = header.index(target_column)
        features: list[list[float]] = []
        targets: list[float] = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: data row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            try:
                parsed = [float(cell) for cell in row]
            except ValueError as exc:
                raise NonNumericCellError(
                    f"{path}: non-numeric cell at data row {rownum}", row=rownum
                ) from exc
            targets.append(parsed[tidx])
            features.append([v for j, v in enumerate(parsed) if j != tidx])
    if not targets:
        raise EmptyDatasetError(f"{path}: empty dataset (header only)")
    return Dataset(np.asarray(features), np.asarray(targets))


def append_intercept(data: Dataset) -> Dataset:
    """Copy of the dataset with a trailing constant-1 feature column."""
    ones = np.ones((data.n, 1))
    return Dataset(np.hstack([data.features, ones]), data.targets)


def train_test_split(data: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive, seeded split; test size = round(n * fraction)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if data.n < 2:
        raise ValueError(f"need at least 2 samples to split, got {data.n}")
    n_test = int(round(data.n * test_fraction))
    if n_test < 1 or n_test >= data.n:
        raise ValueError(
            f"degenerate split: test size {n_test} of {data.n} samples"
        )
    perm = np.random.default_rng(seed).permutation(data.n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return (
        Dataset(data.features[train_idx], data.targets[train_idx]),
        Dataset(data.features[test_idx], data.targets[test_idx]),
    )


@dataclass(frozen=True)
class QuantileReport:
    """Mean and selected quantiles of squared residuals, sorted by level."""

    mean: float
    quantiles: dict[float, float]
    p_levels: list[float]


def residual_quantile_report(w, data: Dataset, p_levels) -> QuantileReport:
    """Squared-residual summary of a linear model on a dataset.

    Levels are sorted ascending; each quantile follows the empirical
    ceil(n*p) order-statistic convention, so the column values are
    nondecreasing in the level.
    """
    w = np.asarray(w, dtype=float)
    levels = sorted(float(p) for p in p_levels)
    for p in levels:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"report levels must lie in [0, 1), got {p}")
    r2 = (data.targets - data.features @ w) ** 2
    return QuantileReport(
        mean=float(r2.mean()),
        quantiles={p: quantile(r2, p) for p in levels},
        p_levels=levels,
    )
