"""Network topology, perturbation processes, and the linear dynamics generator.

Node indices are 0-based everywhere in the Python API.  File formats and the
CLI use 1-based bus ids (the convention of published bus-system datasets);
conversion happens at the I/O boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SimulationError",
    "NetworkTopology",
    "LinearDynamicsParams",
    "PerturbationProcess",
    "DynamicsTrace",
    "build_topology",
    "simulate_linear",
    "sample_measurements",
    "export_trace_csv",
    "load_trace_csv",
]


class SimulationError(RuntimeError):
    """Raised when a dynamics simulation fails (divergence, non-convergence)."""


@dataclass(frozen=True)
class NetworkTopology:
    """Static graph of the networked system.

    ``adjacency[m, n] == 1`` records a directed link from node n to node m.
    Generator and load index sets partition ``range(node_count)``.
    """

    node_count: int
    adjacency: np.ndarray
    generator_nodes: tuple[int, ...]
    load_nodes: tuple[int, ...]

    def __post_init__(self):
        n = self.node_count
        if n <= 0:
            raise ValueError("node_count must be positive")
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency shape does not match node_count")
        if np.any(np.diag(self.adjacency) != 0):
            raise ValueError("adjacency diagonal must be zero")
        gens, loads = set(self.generator_nodes), set(self.load_nodes)
        if gens & loads:
            raise ValueError("generator and load sets overlap")
        if gens | loads != set(range(n)):
            raise ValueError("generator/load sets must partition the node set")


@dataclass(frozen=True)
class LinearDynamicsParams:
    """Linear one-step update x[k+1] = transition @ x[k] + b[k]."""

    transition: np.ndarray
    initial_state: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.transition, dtype=float)
        x0 = np.asarray(self.initial_state, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("transition must be a square matrix")
        if x0.shape != (a.shape[0],):
            raise ValueError("initial_state length must match transition size")
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "initial_state", x0)

    @property
    def node_count(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class PerturbationProcess:
    """Sparse impulse schedule driving the dynamics.

    ``injection_times`` are strictly increasing sample indices; each event
    carries a full per-node amplitude vector.  For the linear model the
    amplitude is added to the state update at that step; for the swing model
    it is the new load deviation from reference on ``target_nodes`` (an event
    rewrites the deviation there and leaves other nodes untouched).
    """

    injection_times: np.ndarray
    injection_amplitudes: np.ndarray
    target_nodes: tuple[int, ...] | None = None
    rate: float = 0.0
    seed: int | None = None
    target_masks: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.injection_times, dtype=np.int64)
        amps = np.asarray(self.injection_amplitudes, dtype=float)
        if times.ndim != 1:
            raise ValueError("injection_times must be one-dimensional")
        if len(times) and np.any(np.diff(times) <= 0):
            raise ValueError("injection_times must be strictly increasing")
        if len(times) and np.any(times < 0):
            raise ValueError("injection_times must be non-negative")
        if amps.shape[0] != len(times):
            raise ValueError("one amplitude vector required per injection time")
        if self.target_masks is not None and self.target_masks.shape != amps.shape:
            raise ValueError("target_masks must match the amplitude array shape")
        if self.rate < 0:
            raise ValueError("rate must be non-negative")
        object.__setattr__(self, "injection_times", times)
        object.__setattr__(self, "injection_amplitudes", amps)

    def event_mask(self, index: int, node_count: int) -> np.ndarray:
        """Boolean mask of the nodes rewritten by event ``index``."""
        if self.target_masks is not None:
            return self.target_masks[index]
        mask = np.zeros(node_count, dtype=bool)
        if self.target_nodes is None:
            mask[:] = True
        else:
            mask[list(self.target_nodes)] = True
        return mask

    @classmethod
    def none(cls, node_count: int) -> "PerturbationProcess":
        """Empty schedule (no injections)."""
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, node_count)))

    @classmethod
    def sample(
        cls,
        rate: float,
        amplitude_variance: float,
        node_count: int,
        horizon: int,
        dt: float,
        seed: int,
        target_nodes: tuple[int, ...] | None = None,
        include_start: bool = False,
    ) -> "PerturbationProcess":
        """Draw a random schedule.

        The event count is Poisson(rate * horizon * dt); events land on
        distinct sample indices drawn uniformly without replacement, which
        keeps the count Poisson while the index list stays strictly
        increasing.  Amplitudes are i.i.d. zero-mean Gaussians with the given
        variance on the target nodes (zero elsewhere).
        """
        if rate < 0 or amplitude_variance < 0:
            raise ValueError("rate and amplitude_variance must be non-negative")
        rng = np.random.default_rng(seed)
        count = int(rng.poisson(rate * horizon * dt))
        count = min(count, horizon)
        times = np.sort(rng.choice(horizon, size=count, replace=False))
        if include_start and (len(times) == 0 or times[0] != 0):
            times = np.concatenate(([0], times[times > 0]))
        targets = np.arange(node_count) if target_nodes is None else np.asarray(target_nodes)
        amps = np.zeros((len(times), node_count))
        amps[:, targets] = rng.normal(0.0, np.sqrt(amplitude_variance), size=(len(times), len(targets)))
        return cls(times.astype(np.int64), amps, target_nodes=target_nodes, rate=rate, seed=seed)


@dataclass(frozen=True)
class DynamicsTrace:
    """Sampled per-node signals: an (N, K) matrix plus the sample period."""

    values: np.ndarray
    sample_period: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be an (N, K) matrix")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        object.__setattr__(self, "values", v)

    @property
    def node_count(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]


def build_topology(
    edges: list[tuple[int, int]],
    node_count: int,
    generators: tuple[int, ...] | list[int],
    undirected: bool = False,
) -> NetworkTopology:
    """Build a topology from a directed edge list.

    Each pair (a, b) records a link a -> b.  With ``undirected=True`` both
    directions are stored.  Duplicate edges, self-loops, and out-of-range
    indices are rejected.
    """
    adjacency = np.zeros((node_count, node_count), dtype=np.int8)
    seen = set()
    for a, b in edges:
        if not (0 <= a < node_count and 0 <= b < node_count):
            raise ValueError(f"edge ({a}, {b}) out of range for {node_count} nodes")
        if a == b:
            raise ValueError(f"self-loop at node {a} rejected")
        if (a, b) in seen:
            raise ValueError(f"duplicate edge ({a}, {b}) rejected")
        seen.add((a, b))
        adjacency[b, a] = 1
        if undirected:
            if (b, a) in seen:
                raise ValueError(f"duplicate edge ({b}, {a}) rejected")
            seen.add((b, a))
            adjacency[a, b] = 1
    generators = tuple(sorted(int(g) for g in generators))
    for g in generators:
        if not 0 <= g < node_count:
            raise ValueError(f"generator index {g} out of range")
    loads = tuple(i for i in range(node_count) if i not in set(generators))
    return NetworkTopology(node_count, adjacency, generators, loads)


def simulate_linear(
    params: LinearDynamicsParams,
    perturbations: PerturbationProcess,
    horizon: int,
    sample_period: float = 1.0,
) -> DynamicsTrace:
    """Run the linear recursion x[k+1] = A x[k] + b[k] for ``horizon`` samples.

    Column k of the result is the state at step k (column 0 is the initial
    state); an injection at time k therefore first shows up in column k+1.
    """
    n = params.node_count
    if perturbations.injection_amplitudes.shape[1:] not in ((), (n,)):
        raise ValueError("perturbation amplitudes do not match node count")
    x = np.zeros((n, horizon))
    x[:, 0] = params.initial_state
    b_at = {int(k): perturbations.injection_amplitudes[i] for i, k in enumerate(perturbations.injection_times)}
    a = params.transition
    for k in range(horizon - 1):
        nxt = a @ x[:, k]
        if k in b_at:
            nxt = nxt + b_at[k]
        x[:, k + 1] = nxt
    return DynamicsTrace(x, sample_period)


def sample_measurements(trace: DynamicsTrace, noise_variance: float, seed: int) -> DynamicsTrace:
    """Add i.i.d. Gaussian sensor noise to every entry of the trace.

    Each node row gets an independent substream (spawned from ``seed``), so
    two nodes measuring the same underlying signal see independent noise.
    """
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    if noise_variance == 0:
        return DynamicsTrace(trace.values.copy(), trace.sample_period)
    std = np.sqrt(noise_variance)
    children = np.random.SeedSequence(seed).spawn(trace.node_count)
    noisy = trace.values.copy()
    for i, child in enumerate(children):
        noisy[i] += np.random.default_rng(child).normal(0.0, std, size=trace.horizon)
    return DynamicsTrace(noisy, trace.sample_period)


def export_trace_csv(trace: DynamicsTrace, path) -> None:
    """Write a trace as CSV: one row per node, first column the 1-based node id.

    The header stores the sample timestamps, so the sample period survives a
    round trip.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["node"] + [f"{k * trace.sample_period:.17g}" for k in range(trace.horizon)]
        writer.writerow(header)
        for i in range(trace.node_count):
            writer.writerow([i + 1] + [f"{v:.17g}" for v in trace.values[i]])


def load_trace_csv(path) -> DynamicsTrace:
    """Read a trace written by :func:`export_trace_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "node":
        raise ValueError(f"{path}: not a trace CSV (missing 'node' header)")
    stamps = [float(v) for v in rows[0][1:]]
    dt = stamps[1] - stamps[0] if len(stamps) > 1 else 1.0
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return DynamicsTrace(values, dt)
