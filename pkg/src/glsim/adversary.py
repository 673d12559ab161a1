"""Passive eavesdropping (sampling-set recovery) and active jamming models.

The passive eavesdropper instruments a subset of nodes chosen greedily by
condition number, reconstructs the full dynamics through the bandlimited
surrogate, and subtracts the reconstructed transmitter row from intercepted
ciphertext.  The active attacker floods the physical system with frequent
high-variance load injections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gft import GftSurrogate
from .netmodel import PerturbationProcess
from .pipeline import demodulate_and_ber

__all__ = [
    "PassiveEveConfig",
    "ActiveAttackConfig",
    "RecoveryReport",
    "greedy_sampling_set",
    "reconstruct_dynamics",
    "eve_decrypt",
    "jamming_schedule",
    "export_recovery_csv",
]


@dataclass(frozen=True)
class PassiveEveConfig:
    """What the passive eavesdropper can do and know."""

    hacked_fraction: float
    knows_surrogate: bool = True
    knows_weights: bool = True
    noise_variance: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.hacked_fraction <= 1.0:
            raise ValueError("hacked_fraction must lie in [0, 1]")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")


@dataclass(frozen=True)
class ActiveAttackConfig:
    """Jamming injection law: Poisson arrivals, Gaussian amplitudes."""

    jamming_rate: float
    amplitude_variance: float = 5.0
    target_nodes: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.jamming_rate < 0 or self.amplitude_variance < 0:
            raise ValueError("rate and variance must be non-negative")


@dataclass(frozen=True)
class RecoveryReport:
    """Outcome of a sampling-set reconstruction attempt."""

    sampled_set: tuple[int, ...]
    reconstructed: np.ndarray
    rmse: float
    rank_ok: bool


def _as_gamma(surrogate) -> np.ndarray:
    if isinstance(surrogate, GftSurrogate):
        return surrogate.surrogate
    return np.asarray(surrogate, dtype=float)


def _cond_smin(rows: np.ndarray) -> tuple[float, float]:
    # condition number over the nonzero spectrum (rank-deficient stacks keep a
    # finite score) but the tie-break smin counts zeros, so redundant rows lose
    sv = np.linalg.svd(rows, compute_uv=False)
    positive = sv[sv > sv[0] * max(rows.shape) * np.finfo(float).eps] if sv.size and sv[0] > 0 else sv[:0]
    if positive.size == 0:
        return np.inf, 0.0
    smin = float(sv[-1]) if positive.size == sv.size else 0.0
    return float(positive[0] / positive[-1]), smin


def greedy_sampling_set(surrogate, target_size: int) -> tuple[int, ...]:
    """Grow a sensing set one node at a time, minimizing the condition number.

    Condition-number ties (every nonzero single row scores 1, for instance)
    prefer the candidate with the larger smallest singular value, which keeps
    later additions well conditioned; remaining ties go to the lowest node
    index.  With fewer rows than the bandlimit rank the condition number uses
    the nonzero singular values of the stacked rows.
    """
    gamma = _as_gamma(surrogate)
    n = gamma.shape[0]
    if not 1 <= target_size <= n:
        raise ValueError("target_size must be between 1 and the node count")
    chosen: list[int] = []
    for _ in range(target_size):
        best_j, best_c, best_s = -1, np.inf, 0.0
        for j in range(n):
            if j in chosen:
                continue
            c, smin = _cond_smin(gamma[chosen + [j], :])
            better = c < best_c * (1 - 1e-12)
            tied = abs(c - best_c) <= 1e-12 * max(c, best_c) and smin > best_s * (1 + 1e-12)
            if better or tied:
                best_j, best_c, best_s = j, c, smin
        chosen.append(best_j)
    return tuple(chosen)


def reconstruct_dynamics(surrogate, sampled_set, measured_rows: np.ndarray,
                         truth: np.ndarray | None = None) -> RecoveryReport:
    """Least-squares recovery of the full signal from the sampled rows.

    ``measured_rows`` holds one row per sampled node (same order).  The
    reconstruction lives in the surrogate's signal mode.  With fewer samples
    than the rank the solve still returns its least-squares answer but the
    report flags the rank deficiency.
    """
    gamma = _as_gamma(surrogate)
    sampled = tuple(int(i) for i in sampled_set)
    rows = np.asarray(measured_rows, dtype=float)
    if rows.shape[0] != len(sampled):
        raise ValueError("one measured row required per sampled node")
    sub = gamma[list(sampled), :]
    rank = np.linalg.matrix_rank(sub)
    coeffs = np.linalg.pinv(sub) @ rows
    reconstructed = gamma @ coeffs
    rmse = float("nan")
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        rmse = float(np.sqrt(np.mean((reconstructed - truth) ** 2)))
    return RecoveryReport(sampled, reconstructed, rmse, rank == gamma.shape[1])


def eve_decrypt(ciphertext, recovered_tx_row, tx_weight: float, reference_bits,
                amplitude: float) -> tuple[np.ndarray, float]:
    """Decrypt intercepted ciphertext with the reconstructed transmitter row.

    Without a recovery (``recovered_tx_row`` None) the interceptor just
    demodulates the raw ciphertext.
    """
    ciphertext = np.asarray(ciphertext, dtype=float)
    if recovered_tx_row is None:
        estimate = ciphertext
    else:
        row = np.asarray(recovered_tx_row, dtype=float)[: len(ciphertext)]
        estimate = ciphertext - tx_weight * row
    return estimate, demodulate_and_ber(estimate, reference_bits, amplitude)


def jamming_schedule(config: ActiveAttackConfig, node_count: int, horizon: int,
                     dt: float) -> PerturbationProcess:
    """Draw the attacker's injection schedule over the run."""
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    return PerturbationProcess.sample(
        config.jamming_rate, config.amplitude_variance, node_count, horizon, dt,
        seed=config.seed, target_nodes=config.target_nodes)


def export_recovery_csv(report: RecoveryReport, path, truth: np.ndarray | None = None,
                        sample_period: float = 1.0) -> None:
    """Write (node, time, truth, estimate) rows for downstream inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "time", "truth", "estimate"])
        est = report.reconstructed
        for i in range(est.shape[0]):
            for k in range(est.shape[1]):
                t = f"{truth[i, k]:.17g}" if truth is not None else ""
                writer.writerow([i + 1, f"{k * sample_period:.17g}", t, f"{est[i, k]:.17g}"])
