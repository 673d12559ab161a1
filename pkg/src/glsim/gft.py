"""Data-driven graph Fourier surrogate of the networked dynamics.

The orthonormal basis comes from the eigendecomposition of the accumulated
Gram matrix of training traces; the bandlimit rank is the largest numerical
rank among the traces.  The leading basis columns form the surrogate used for
dependency analysis in place of the unknown dynamics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .netmodel import DynamicsTrace

__all__ = [
    "TrainingSet",
    "GftSurrogate",
    "choose_signal_mode",
    "fit_surrogate",
    "bandlimited_residual",
    "to_mode",
    "save_surrogate",
    "load_surrogate",
]

RAW = "raw"
TIME_DIFFERENCE = "time_difference"
DEFAULT_RANK_TOLERANCE = 1e-8


@dataclass(frozen=True)
class TrainingSet:
    """Traces used to fit the surrogate, with the signal-mode choice.

    ``window`` keeps only the first L columns of every trace for fitting
    (None = all).  ``mode`` may be left None and decided later by
    :func:`choose_signal_mode`.
    """

    traces: tuple[DynamicsTrace, ...]
    mode: str | None = None
    window: int | None = None

    def __post_init__(self):
        if len(self.traces) < 1:
            raise ValueError("at least one training trace required")
        counts = {t.node_count for t in self.traces}
        if len(counts) != 1:
            raise ValueError("training traces must share the node count")
        if self.mode not in (None, RAW, TIME_DIFFERENCE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.window is not None and self.window < 1:
            raise ValueError("window must keep at least one column")
        object.__setattr__(self, "traces", tuple(self.traces))

    @property
    def node_count(self) -> int:
        return self.traces[0].node_count


@dataclass(frozen=True)
class GftSurrogate:
    """Orthonormal basis, spectrum, bandlimit rank, and signal mode."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    bandlimit_rank: int
    mode: str

    def __post_init__(self):
        u, lam = np.asarray(self.basis, float), np.asarray(self.eigenvalues, float)
        n = u.shape[0]
        if u.shape != (n, n):
            raise ValueError("basis must be square")
        if np.max(np.abs(u.T @ u - np.eye(n))) > 1e-10:
            raise ValueError("basis is not orthonormal")
        if np.any(np.diff(lam) > 1e-12 * max(1.0, abs(lam[0]))):
            raise ValueError("eigenvalues must be sorted descending")
        if not 1 <= self.bandlimit_rank <= n:
            raise ValueError("bandlimit_rank out of range")
        object.__setattr__(self, "basis", u)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def node_count(self) -> int:
        return self.basis.shape[0]

    @property
    def surrogate(self) -> np.ndarray:
        """The N x r surrogate: the first r basis columns."""
        return self.basis[:, : self.bandlimit_rank]


def _in_mode(values: np.ndarray, mode: str) -> np.ndarray:
    if mode == RAW:
        return values
    if values.shape[1] < 2:
        raise ValueError("time_difference needs a horizon of at least 2")
    return np.diff(values, axis=1)


def to_mode(surrogate: GftSurrogate, values: np.ndarray) -> np.ndarray:
    """Convert raw trace values into the surrogate's signal mode."""
    return _in_mode(np.asarray(values, float), surrogate.mode)


def _gram_basis(mats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    n = mats[0].shape[0]
    gram = np.zeros((n, n))
    for y in mats:
        gram += y @ y.T
    lam, vec = np.linalg.eigh(gram)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    vec = vec[:, order]
    # deterministic sign: largest-magnitude entry of each column positive
    for j in range(n):
        k = np.argmax(np.abs(vec[:, j]))
        if vec[k, j] < 0:
            vec[:, j] = -vec[:, j]
    return vec, lam


def _mode_matrices(training: TrainingSet, mode: str) -> list[np.ndarray]:
    window = training.window
    out = []
    for t in training.traces:
        vals = t.values if window is None else t.values[:, :window]
        out.append(_in_mode(vals, mode))
    return out


def fit_surrogate(training: TrainingSet, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> GftSurrogate:
    """Fit the orthonormal basis and bandlimit rank from training traces.

    The basis diagonalizes the summed Gram matrix of the (windowed, in-mode)
    traces; the rank is the maximum over traces of the count of singular
    values at least ``rank_tolerance`` times the trace's largest.
    """
    mode = training.mode or RAW
    mats = _mode_matrices(training, mode)
    if all(not np.any(m) for m in mats):
        raise ValueError("training data is identically zero")
    basis, lam = _gram_basis(mats)
    rank = 0
    for y in mats:
        sv = np.linalg.svd(y, compute_uv=False)
        if sv.size and sv[0] > 0:
            rank = max(rank, int(np.sum(sv >= rank_tolerance * sv[0])))
    return GftSurrogate(basis, lam, rank, mode)


def bandlimited_residual(surrogate: GftSurrogate, trace: DynamicsTrace | np.ndarray) -> float:
    """Relative energy outside the bandlimited subspace, in the fitted mode.

    Returns ||(I - GG^T) Y||_F / ||Y||_F for Y the in-mode trace and G the
    surrogate columns.
    """
    values = trace.values if isinstance(trace, DynamicsTrace) else np.asarray(trace, float)
    if values.shape[0] != surrogate.node_count:
        raise ValueError("trace node count does not match surrogate")
    y = _in_mode(values, surrogate.mode)
    norm = np.linalg.norm(y)
    if norm == 0:
        raise ValueError("zero-norm trace has no defined residual")
    g = surrogate.surrogate
    return float(np.linalg.norm(y - g @ (g.T @ y)) / norm)


def choose_signal_mode(training: TrainingSet, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> str:
    """Pick raw vs time-difference by held-out bandlimited residual.

    The last 20% of the in-mode columns of each trace are held out; both
    modes are fitted on the rest and compared at equal rank (the smaller of
    the two fitted ranks).  Ties go to raw.
    """
    fit_parts, held_parts = {RAW: [], TIME_DIFFERENCE: []}, {RAW: [], TIME_DIFFERENCE: []}
    for t in training.traces:
        vals = t.values if training.window is None else t.values[:, : training.window]
        for mode in (RAW, TIME_DIFFERENCE):
            y = _in_mode(vals, mode)
            cut = max(1, int(np.ceil(0.8 * y.shape[1])))
            fit_parts[mode].append(y[:, :cut])
            held_parts[mode].append(y[:, cut:] if cut < y.shape[1] else y[:, :0])
    results = {}
    for mode in (RAW, TIME_DIFFERENCE):
        basis, _ = _gram_basis(fit_parts[mode])
        rank = 0
        for y in fit_parts[mode]:
            sv = np.linalg.svd(y, compute_uv=False)
            if sv.size and sv[0] > 0:
                rank = max(rank, int(np.sum(sv >= rank_tolerance * sv[0])))
        results[mode] = (basis, max(rank, 1))
    r_cmp = min(results[RAW][1], results[TIME_DIFFERENCE][1])
    residuals = {}
    for mode in (RAW, TIME_DIFFERENCE):
        g = results[mode][0][:, :r_cmp]
        per_trace = []
        for y in held_parts[mode]:
            norm = np.linalg.norm(y)
            if norm > 0:
                per_trace.append(np.linalg.norm(y - g @ (g.T @ y)) / norm)
        residuals[mode] = float(np.mean(per_trace)) if per_trace else 0.0
    if residuals[TIME_DIFFERENCE] < residuals[RAW] - 1e-15:
        return TIME_DIFFERENCE
    return RAW


def save_surrogate(surrogate: GftSurrogate, path) -> None:
    """Persist (N, r, mode, eigenvalues, basis) as a byte-stable CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_count", "rank", "mode"])
        writer.writerow([surrogate.node_count, surrogate.bandlimit_rank, surrogate.mode])
        writer.writerow(["eigenvalues"])
        writer.writerow([f"{v:.17g}" for v in surrogate.eigenvalues])
        writer.writerow(["basis"])
        for row in surrogate.basis:
            writer.writerow([f"{v:.17g}" for v in row])


def load_surrogate(path) -> GftSurrogate:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["node_count", "rank", "mode"]:
        raise ValueError(f"{path}: not a surrogate file")
    n, rank, mode = int(rows[1][0]), int(rows[1][1]), rows[1][2]
    lam = np.array([float(v) for v in rows[3]])
    basis = np.array([[float(v) for v in row] for row in rows[5 : 5 + n]])
    return GftSurrogate(basis, lam, rank, mode)
