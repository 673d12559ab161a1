"""Scenario orchestration: sweeps over noise, eavesdroppers, and jamming.

A scenario is a deterministic function of (config, master seed).  Every random
draw derives its generator from a named stream: a 63-bit integer hashed from
``master_seed / stream / sweep index / trial / extra`` with blake2s, so runs
reproduce byte-identically and trials are independent.

Per trial the driver simulates training runs, fits the surrogate, simulates
the transmission window (plus one jammed variant per attack rate), computes
relay plans per sweep point, and runs the communication pipeline for the
legitimate pair and every configured adversary.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import adversary, gft, pipeline, swing
from .netmodel import (DynamicsTrace, LinearDynamicsParams, PerturbationProcess,
                       sample_measurements)
from .secrecy import RelayPlan, SolverConfig, select_relays

__all__ = [
    "ScenarioConfig",
    "ResultRow",
    "ResultTable",
    "run_scenario",
    "export_csv",
    "load_result_csv",
    "emit_plot_data",
    "default_bus_data_path",
]

BER_LOW = 1e-3
BER_HIGH = 1e-1
FIGURES = ("fig3a", "fig3b", "fig4", "fig5", "fig6")

# named randomness streams (see module docstring)
_TRAIN, _TRANSMIT, _JAM, _MEASURE, _EVE, _BITS, _PAIRS = range(1, 8)


def _seed(*parts) -> int:
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.blake2s(text.encode(), digest_size=8).digest(), "big") >> 1


def default_bus_data_path() -> str:
    from importlib.resources import files

    return str(files("glsim").joinpath("data/ieee39.csv"))


def _resolve_path(path: str | None) -> str | None:
    if path is None:
        return None
    base = os.environ.get("GLSIM_DATA_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a sweep needs; see ``from_json`` for the file schema."""

    scenario_id: str
    model: str  # "linear" | "swing39"
    noise_variances: tuple[float, ...]
    amplitude: float
    model_params: str | None = None
    horizon: int = 5000
    dt: float = 1e-3
    bits: int = 5000
    training_runs: int = 10
    rank_tolerance: float = 3e-4
    mode: str = "auto"
    pairs: object = 100  # "all" | int sample size | explicit 0-based pair list
    passive_fractions: tuple[float, ...] = (0.0, 0.05, 0.10, 0.25)
    eve_noise_variance: float | None = None
    active_rates: tuple[float, ...] = ()
    jam_variance: float = 5.0
    perturb_rate: float = 0.1
    perturb_variance: float | None = None  # linear-model shock variance
    trials: int = 20
    master_seed: int = 0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("linear", "swing39"):
            raise ValueError(f"unknown model {self.model!r}")
        if not self.noise_variances:
            raise ValueError("noise_variances must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        object.__setattr__(self, "noise_variances", tuple(self.noise_variances))
        object.__setattr__(self, "passive_fractions", tuple(self.passive_fractions))
        object.__setattr__(self, "active_rates", tuple(self.active_rates))

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        """Load a config file.  Pairs in the file use 1-based node ids."""
        with open(path) as fh:
            raw = json.load(fh)
        pairs = raw.get("pairs", 100)
        if isinstance(pairs, list):
            pairs = [(int(a) - 1, int(b) - 1) for a, b in pairs]
        raw["pairs"] = pairs
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def solver_config(self, noise_variance: float) -> SolverConfig:
        return SolverConfig(signal_mean=self.amplitude / 2.0,
                            noise_variance=noise_variance, **self.solver)


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    sweep_value: float
    role: str
    trial: int
    mean_ber: float
    frac_low: float
    frac_mid: float
    frac_high: float
    rmse: float | None
    seed: int


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]

    def roles(self) -> tuple[str, ...]:
        seen = []
        for row in self.rows:
            if row.role not in seen:
                seen.append(row.role)
        return tuple(seen)

    def sweep_values(self) -> tuple[float, ...]:
        return tuple(sorted({row.sweep_value for row in self.rows}))

    def mean_over_trials(self, role: str, metric: str = "mean_ber") -> list[tuple[float, float]]:
        """Per sweep value, the across-trial mean of one metric for a role."""
        out = []
        for value in self.sweep_values():
            vals = [getattr(r, metric) for r in self.rows
                    if r.role == role and r.sweep_value == value]
            vals = [v for v in vals if v is not None and not math.isnan(v)]
            if vals:
                out.append((value, float(np.mean(vals))))
        return out


def _buckets(bers: np.ndarray) -> tuple[float, float, float]:
    low = float(np.mean(bers < BER_LOW))
    high = float(np.mean(bers > BER_HIGH))
    return low, 1.0 - low - high, high


class _Model:
    """Uniform facade over the two dynamics generators."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        if config.model == "swing39":
            path = _resolve_path(config.model_params) or default_bus_data_path()
            self.topology, self.params = swing.load_bus_system(path)
            self.node_count = self.topology.node_count
            self.targets = self.topology.load_nodes
            self.event_std = np.zeros(self.node_count)
            self.event_std[list(self.targets)] = np.sqrt(self.params.load_var)
        else:
            path = _resolve_path(config.model_params)
            if path is None:
                raise ValueError("linear model requires model_params (JSON file)")
            with open(path) as fh:
                raw = json.load(fh)
            self.linear = LinearDynamicsParams(np.array(raw["transition"], dtype=float),
                                               np.array(raw["initial_state"], dtype=float))
            self.node_count = self.linear.node_count
            self.targets = tuple(range(self.node_count))
            var = config.perturb_variance
            if var is None:
                var = float(raw.get("perturb_variance", 1.0))
            self.event_std = np.full(self.node_count, np.sqrt(var))
            # optional shock basis restricts state shocks to its column span
            self.shock_basis = (np.array(raw["shock_basis"], dtype=float)
                                if "shock_basis" in raw else None)
            self.topology = None

    def _events(self, times: np.ndarray, rng) -> PerturbationProcess:
        amps = np.zeros((len(times), self.node_count))
        if getattr(self, "shock_basis", None) is not None:
            draws = rng.normal(0.0, self.event_std[0], size=(len(times), self.shock_basis.shape[1]))
            amps[:] = draws @ self.shock_basis.T
        else:
            amps[:, list(self.targets)] = rng.normal(
                0.0, 1.0, size=(len(times), len(self.targets))) * self.event_std[list(self.targets)]
        return PerturbationProcess(times, amps, target_nodes=self.targets)

    def schedule(self, rate: float, seed: int, include_start: bool) -> PerturbationProcess:
        """Poisson event schedule with per-node draw scales."""
        cfg = self.config
        rng = np.random.default_rng(seed)
        count = min(int(rng.poisson(rate * cfg.horizon * cfg.dt)), cfg.horizon - 1)
        times = np.sort(rng.choice(np.arange(1, cfg.horizon), size=count, replace=False))
        if include_start:
            times = np.concatenate(([0], times)).astype(np.int64)
        return self._events(times.astype(np.int64), rng)

    def simulate(self, process: PerturbationProcess) -> DynamicsTrace:
        cfg = self.config
        if self.config.model == "swing39":
            return swing.simulate_swing(self.topology, self.params, process,
                                        cfg.horizon, cfg.dt)
        from .netmodel import simulate_linear

        return simulate_linear(self.linear, process, cfg.horizon, cfg.dt)


def merge_processes(base: PerturbationProcess, extra: PerturbationProcess,
                    node_count: int) -> PerturbationProcess:
    """Superimpose two event schedules (the second wins on shared targets)."""
    events: dict[int, np.ndarray] = {}
    masks: dict[int, np.ndarray] = {}

    def fold(proc: PerturbationProcess):
        targets = proc.target_nodes
        mask = np.zeros(node_count, dtype=bool)
        mask[list(targets) if targets is not None else slice(None)] = True
        for i, k in enumerate(proc.injection_times):
            k = int(k)
            if k not in events:
                events[k] = np.zeros(node_count)
                masks[k] = np.zeros(node_count, dtype=bool)
            events[k][mask] = proc.injection_amplitudes[i][mask]
            masks[k][mask] = True

    fold(base)
    fold(extra)
    times = np.array(sorted(events), dtype=np.int64)
    amps = np.array([events[int(k)] for k in times]) if len(times) else np.zeros((0, node_count))
    mask_arr = np.array([masks[int(k)] for k in times]) if len(times) else np.zeros((0, node_count), bool)
    return PerturbationProcess(times, amps, target_nodes=None, target_masks=mask_arr)


def resolve_pairs(config: ScenarioConfig, model: _Model) -> list[tuple[int, int]]:
    """Ordered (tx, rx) pairs: all, an explicit list, or a stratified sample.

    Sampling stratifies by generator/load membership of both endpoints so the
    sample covers all four pair kinds proportionally.
    """
    n = model.node_count
    everything = [(a, b) for a in range(n) for b in range(n) if a != b]
    spec = config.pairs
    if spec == "all":
        return everything
    if isinstance(spec, list):
        for a, b in spec:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ValueError(f"bad pair ({a}, {b})")
        return [tuple(p) for p in spec]
    count = int(spec)
    if count >= len(everything):
        return everything
    rng = np.random.default_rng(_seed(config.master_seed, _PAIRS))
    if model.topology is None:
        idx = rng.choice(len(everything), size=count, replace=False)
        return sorted(everything[i] for i in idx)
    gens = set(model.topology.generator_nodes)
    strata: dict[tuple[bool, bool], list[tuple[int, int]]] = {}
    for pair in everything:
        strata.setdefault((pair[0] in gens, pair[1] in gens), []).append(pair)
    chosen: list[tuple[int, int]] = []
    keys = sorted(strata)
    for i, key in enumerate(keys):
        bucket = strata[key]
        want = round(count * len(bucket) / len(everything))
        if i == len(keys) - 1:
            want = count - len(chosen)
        want = min(want, len(bucket))
        idx = rng.choice(len(bucket), size=want, replace=False)
        chosen.extend(bucket[j] for j in idx)
    return sorted(chosen)


def run_scenario(config: ScenarioConfig) -> ResultTable:
    """Run the full sweep and return one row per (sweep value, role, trial)."""
    model = _Model(config)
    n = model.node_count
    pairs = resolve_pairs(config, model)
    if not pairs:
        raise ValueError("no (tx, rx) pairs to run")
    master = config.master_seed
    eve_fracs = list(config.passive_fractions)
    jam_rates = [r for r in config.active_rates if r > 0]
    rows: list[ResultRow] = []

    for trial in range(config.trials):
        trial_seed = _seed(master, "trial", trial)
        training = []
        for d in range(config.training_runs):
            proc = model._events(np.array([0], dtype=np.int64),
                                 np.random.default_rng(_seed(master, _TRAIN, trial, d)))
            training.append(model.simulate(proc))
        tset = gft.TrainingSet(tuple(training), mode=None)
        mode = config.mode
        if mode == "auto":
            mode = gft.choose_signal_mode(tset, config.rank_tolerance)
        surrogate = gft.fit_surrogate(gft.TrainingSet(tuple(training), mode=mode),
                                      config.rank_tolerance)
        base_proc = model.schedule(config.perturb_rate, _seed(master, _TRANSMIT, trial), True)
        clean_trace = model.simulate(base_proc)
        truth = gft.to_mode(surrogate, clean_trace.values)
        length = min(config.bits, truth.shape[1])
        bits_by_pair = {p: pipeline.BitStream.random(length, _seed(master, _BITS, trial, i))
                        for i, p in enumerate(pairs)}
        jam_traces = {}
        for ri, rate in enumerate(jam_rates):
            jam = adversary.jamming_schedule(
                adversary.ActiveAttackConfig(rate, config.jam_variance,
                                             target_nodes=model.targets,
                                             seed=_seed(master, _JAM, trial, ri)),
                n, config.horizon, config.dt)
            jam_traces[rate] = model.simulate(merge_processes(base_proc, jam, n))

        prev_plans: dict[tuple[int, int], RelayPlan] = {}
        for sweep_idx, sigma2 in enumerate(config.noise_variances):
            solver_cfg = config.solver_config(sigma2)
            plans = {}
            for pair in pairs:
                warm = prev_plans.get(pair)
                plans[pair] = select_relays(surrogate, pair[0], pair[1], solver_cfg,
                                            initial_weights=None if warm is None else warm.weights)
            prev_plans = plans
            measured = sample_measurements(clean_trace, sigma2,
                                           _seed(master, _MEASURE, sweep_idx, trial))
            y_meas = gft.to_mode(surrogate, measured.values)
            records = {}
            legit_bers = []
            for pair in pairs:
                rec = pipeline.transmit(plans[pair], y_meas, bits_by_pair[pair], config.amplitude)
                records[pair] = rec
                legit_bers.append(pipeline.demodulate_and_ber(rec.estimate, bits_by_pair[pair],
                                                              config.amplitude))
            legit_bers = np.array(legit_bers)
            low, mid, high = _buckets(legit_bers)
            rows.append(ResultRow(config.scenario_id, sigma2, "legitimate", trial,
                                  float(legit_bers.mean()), low, mid, high, None, trial_seed))

            for fi, frac in enumerate(eve_fracs):
                role = f"eve-{round(frac * 100):g}%"
                eve_sigma2 = sigma2 if config.eve_noise_variance is None else config.eve_noise_variance
                if frac <= 0:
                    recovered, rmse = None, None
                else:
                    size = max(1, math.ceil(frac * n))
                    sset = adversary.greedy_sampling_set(surrogate, size)
                    eve_measured = sample_measurements(
                        clean_trace, eve_sigma2, _seed(master, _EVE, sweep_idx, trial, fi))
                    y_eve = gft.to_mode(surrogate, eve_measured.values)[list(sset)]
                    report = adversary.reconstruct_dynamics(surrogate, sset, y_eve, truth=truth)
                    recovered, rmse = report.reconstructed, report.rmse
                bers = []
                for pair in pairs:
                    rec = records[pair]
                    row = None if recovered is None else recovered[pair[0]]
                    _, ber = adversary.eve_decrypt(rec.stages[0], row,
                                                   plans[pair].weights[pair[0]],
                                                   bits_by_pair[pair], config.amplitude)
                    bers.append(ber)
                bers = np.array(bers)
                low, mid, high = _buckets(bers)
                rows.append(ResultRow(config.scenario_id, sigma2, role, trial,
                                      float(bers.mean()), low, mid, high, rmse, trial_seed))

            for rate in jam_rates:
                measured_jam = sample_measurements(jam_traces[rate], sigma2,
                                                   _seed(master, _MEASURE, sweep_idx, trial, rate))
                y_jam = gft.to_mode(surrogate, measured_jam.values)
                bers = []
                for pair in pairs:
                    rec = pipeline.transmit(plans[pair], y_jam, bits_by_pair[pair], config.amplitude)
                    bers.append(pipeline.demodulate_and_ber(rec.estimate, bits_by_pair[pair],
                                                            config.amplitude))
                bers = np.array(bers)
                low, mid, high = _buckets(bers)
                rows.append(ResultRow(config.scenario_id, sigma2, f"jam-rate-{rate:g}", trial,
                                      float(bers.mean()), low, mid, high, None, trial_seed))

    order = {role: i for i, role in enumerate(
        ["legitimate"] + [f"eve-{round(f * 100):g}%" for f in eve_fracs]
        + [f"jam-rate-{r:g}" for r in jam_rates])}
    rows.sort(key=lambda r: (r.sweep_value, order.get(r.role, 99), r.trial))
    return ResultTable(tuple(rows))


_COLUMNS = ["scenario_id", "sweep_value", "role", "trial", "mean_ber",
            "frac_ber_low", "frac_ber_mid", "frac_ber_high", "rmse", "seed"]


def export_csv(table: ResultTable, path) -> None:
    """Write the result table with a fixed column order and 17-digit floats."""
    import csv

    if not table.rows:
        raise ValueError("refusing to export an empty table")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in table.rows:
            writer.writerow([
                r.scenario_id, f"{r.sweep_value:.17g}", r.role, r.trial,
                f"{r.mean_ber:.17g}", f"{r.frac_low:.17g}", f"{r.frac_mid:.17g}",
                f"{r.frac_high:.17g}", "" if r.rmse is None else f"{r.rmse:.17g}", r.seed,
            ])


def load_result_csv(path) -> ResultTable:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _COLUMNS:
        raise ValueError(f"{path}: not a result table")
    out = []
    for r in rows[1:]:
        out.append(ResultRow(r[0], float(r[1]), r[2], int(r[3]), float(r[4]),
                             float(r[5]), float(r[6]), float(r[7]),
                             None if r[8] == "" else float(r[8]), int(r[9])))
    return ResultTable(tuple(out))


def _role_fraction(role: str) -> float:
    return float(role.removeprefix("eve-").removesuffix("%")) / 100.0


def _safe(name: str) -> str:
    return name.replace("%", "pct")


def emit_plot_data(table: ResultTable, figure_id: str, outdir, render: bool = True) -> list[str]:
    """Write one CSV series per curve of the requested figure (plus a PNG).

    Series are collected and validated before anything is written, so a
    missing series leaves no partial output behind.
    """
    import csv

    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure id {figure_id!r} (choose from {FIGURES})")
    if not table.rows:
        raise ValueError("empty result table")
    roles = table.roles()
    eve_roles = [r for r in roles if r.startswith("eve-")]
    jam_roles = [r for r in roles if r.startswith("jam-rate-")]
    series: dict[str, tuple[list[float], list[float], tuple[str, str]]] = {}

    if figure_id == "fig3a":
        wanted = ["legitimate"] + eve_roles
        if not eve_roles:
            raise ValueError("fig3a needs eavesdropper roles in the table")
        for role in wanted:
            pts = table.mean_over_trials(role)
            series[f"fig3a_{_safe(role)}"] = ([p[0] for p in pts], [p[1] for p in pts],
                                              ("sigma2", "mean_ber"))
    elif figure_id == "fig3b":
        recovering = [r for r in eve_roles if _role_fraction(r) > 0]
        if not recovering:
            raise ValueError("fig3b needs recovering eavesdropper roles")
        for value in table.sweep_values():
            xs, ys = [], []
            for role in sorted(recovering, key=_role_fraction):
                vals = [r.rmse for r in table.rows
                        if r.role == role and r.sweep_value == value and r.rmse is not None]
                if vals:
                    xs.append(_role_fraction(role))
                    ys.append(float(np.mean(vals)))
            if xs:
                series[f"fig3b_s{value:.3g}"] = (xs, ys, ("hacked_fraction", "rmse"))
        if not series:
            raise ValueError("fig3b needs recovery RMSE values")
    elif figure_id in ("fig4", "fig6"):
        wanted = ["legitimate"] + (eve_roles if figure_id == "fig4" else jam_roles)
        if figure_id == "fig6" and not jam_roles:
            raise ValueError("fig6 needs jamming roles in the table")
        if figure_id == "fig4" and not eve_roles:
            raise ValueError("fig4 needs eavesdropper roles in the table")
        for role in wanted:
            for bucket in ("frac_low", "frac_mid", "frac_high"):
                pts = table.mean_over_trials(role, bucket)
                series[f"{figure_id}_{_safe(role)}_{bucket.removeprefix('frac_')}"] = (
                    [p[0] for p in pts], [p[1] for p in pts], ("sigma2", bucket))
    elif figure_id == "fig5":
        if not jam_roles:
            raise ValueError("fig5 needs jamming roles in the table")
        for role in ["legitimate"] + jam_roles:
            pts = table.mean_over_trials(role)
            series[f"fig5_{_safe(role)}"] = ([p[0] for p in pts], [p[1] for p in pts],
                                             ("sigma2", "mean_ber"))

    os.makedirs(outdir, exist_ok=True)
    written = []
    for name, (xs, ys, header) in sorted(series.items()):
        path = os.path.join(outdir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for x, y in zip(xs, ys):
                writer.writerow([f"{x:.17g}", f"{y:.17g}"])
        written.append(path)
    if render:
        from .plotting import render_figure

        png = os.path.join(outdir, f"{figure_id}.png")
        render_figure(figure_id, {name: (xs, ys) for name, (xs, ys, _) in series.items()}, png)
        written.append(png)
    return written
