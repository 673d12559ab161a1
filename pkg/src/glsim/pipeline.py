"""OOK modulation and the encrypt -> relay -> decrypt -> demodulate chain.

Every stage is an element-wise addition of a weighted measured signal row, so
the receiver estimate minus the plaintext always equals the weighted sum of
the rows that took part; that identity is kept as an audit trail on each
transmission record.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .secrecy import RelayPlan

__all__ = [
    "BitStream",
    "TransmissionRecord",
    "modulate_ook",
    "encrypt",
    "relay_process",
    "decrypt",
    "demodulate_and_ber",
    "transmit",
]


@dataclass(frozen=True)
class BitStream:
    """A 0/1 payload and the seed that generated it (None if handcrafted)."""

    bits: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or np.any(bits > 1):
            raise ValueError("bits must be a flat 0/1 sequence")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def random(cls, length: int, seed: int) -> "BitStream":
        rng = np.random.default_rng(seed)
        return cls(rng.integers(0, 2, size=length, dtype=np.uint8), seed)


@dataclass(frozen=True)
class TransmissionRecord:
    """Stage-by-stage audit of one transmission.

    ``stages`` holds the signal after the transmitter and after each relay;
    ``estimate`` is the receiver output.  ``rows`` maps node -> the measured
    row it contributed, weighted by ``weights[node]``.
    """

    plaintext: np.ndarray
    stages: tuple[np.ndarray, ...]
    estimate: np.ndarray
    amplitude: float
    rows: dict[int, np.ndarray]
    weights: np.ndarray

    def residual(self) -> np.ndarray:
        """Receiver estimate minus the modulated plaintext."""
        return self.estimate - self.plaintext


def _check_lengths(a, b):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def modulate_ook(bits, amplitude: float) -> np.ndarray:
    """On-off keying: bit 1 -> amplitude, bit 0 -> 0."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    bits = bits.bits if isinstance(bits, BitStream) else np.asarray(bits)
    return bits.astype(float) * amplitude


def encrypt(signal, measured_row, weight: float) -> np.ndarray:
    """Transmitter side: add the weighted local dynamics row."""
    signal = np.asarray(signal, dtype=float)
    row = np.asarray(measured_row, dtype=float)
    _check_lengths(signal, row)
    return signal + weight * row


def relay_process(ciphertext, measured_row, weight: float) -> np.ndarray:
    """Relay side: same additive form with the relay's weight and row."""
    return encrypt(ciphertext, measured_row, weight)


def decrypt(ciphertext, measured_row, weight: float) -> np.ndarray:
    """Receiver side: the final additive compensation."""
    return encrypt(ciphertext, measured_row, weight)


def demodulate_and_ber(estimate, reference_bits, amplitude: float) -> float:
    """Threshold detection at half amplitude, then the bit error fraction."""
    estimate = np.asarray(estimate, dtype=float)
    bits = reference_bits.bits if isinstance(reference_bits, BitStream) else np.asarray(reference_bits)
    _check_lengths(estimate, bits)
    decisions = (estimate > amplitude / 2).astype(np.uint8)
    return float(np.mean(decisions != bits))


def transmit(plan: RelayPlan, measured_rows: np.ndarray, bits: BitStream,
             amplitude: float) -> TransmissionRecord:
    """Run the full chain for one plan over the given measured signal matrix.

    ``measured_rows`` must already be in the surrogate's signal mode; only
    the first len(bits) samples are used.  The relay order follows the plan's
    relay set (addition commutes, so order does not change the estimate).
    """
    length = len(bits)
    if measured_rows.shape[1] < length:
        raise ValueError("measured rows shorter than the payload")
    signal = modulate_ook(bits, amplitude)
    rows = {}
    weights = plan.weights
    tx_row = measured_rows[plan.tx, :length]
    rows[plan.tx] = tx_row
    stages = [encrypt(signal, tx_row, weights[plan.tx])]
    for node in plan.relay_set:
        row = measured_rows[node, :length]
        rows[node] = row
        stages.append(relay_process(stages[-1], row, weights[node]))
    rx_row = measured_rows[plan.rx, :length]
    rows[plan.rx] = rx_row
    estimate = decrypt(stages[-1], rx_row, weights[plan.rx])
    return TransmissionRecord(signal, tuple(stages), estimate, amplitude, rows, weights)


def export_record_csv(record: TransmissionRecord, path) -> None:
    """Dump the stage-by-stage audit trail of a transmission."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage"] + [f"s{k}" for k in range(len(record.plaintext))])
        writer.writerow(["plaintext"] + [f"{v:.17g}" for v in record.plaintext])
        for i, stage in enumerate(record.stages):
            writer.writerow([f"stage{i}"] + [f"{v:.17g}" for v in stage])
        writer.writerow(["estimate"] + [f"{v:.17g}" for v in record.estimate])
