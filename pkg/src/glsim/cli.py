"""Command-line front end.

Node ids on the command line and in every file format are 1-based (matching
published bus numbering); the Python API underneath is 0-based.  Commands exit
0 on success; on failure they print a single JSON object
``{"category": ..., "message": ...}`` to stderr and exit with the category's
code: missing-file 3, data 4, solver 5, internal 1 (argparse itself uses 2).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import adversary, experiments, gft, pipeline, swing
from .netmodel import (PerturbationProcess, SimulationError, export_trace_csv,
                       load_trace_csv, sample_measurements, simulate_linear,
                       LinearDynamicsParams)
from .secrecy import SolverConfig, select_relays, save_plans, load_plans

_EXIT_CODES = {"missing-file": 3, "data": 4, "solver": 5, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _bus_path(args) -> str:
    return experiments._resolve_path(args.bus_data) or experiments.default_bus_data_path()


def _load_system(args):
    try:
        return swing.load_bus_system(_bus_path(args))
    except FileNotFoundError as exc:
        raise CliError("missing-file", str(exc))


def _load_schedule(path, node_count) -> PerturbationProcess:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["k", "node", "delta"]:
        raise CliError("data", f"{path}: not a schedule CSV")
    events: dict[int, np.ndarray] = {}
    masks: dict[int, np.ndarray] = {}
    for k, node, delta in rows[1:]:
        k = int(k)
        events.setdefault(k, np.zeros(node_count))[int(node) - 1] = float(delta)
        masks.setdefault(k, np.zeros(node_count, dtype=bool))[int(node) - 1] = True
    times = np.array(sorted(events), dtype=np.int64)
    return PerturbationProcess(times, np.array([events[int(t)] for t in times]),
                               target_masks=np.array([masks[int(t)] for t in times]))


def _save_schedule(proc: PerturbationProcess, node_count: int, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "node", "delta"])
        for i, k in enumerate(proc.injection_times):
            mask = proc.event_mask(i, node_count)
            for node in np.nonzero(mask)[0]:
                writer.writerow([int(k), int(node) + 1,
                                 f"{proc.injection_amplitudes[i, node]:.17g}"])


def _cmd_simulate(args) -> int:
    if args.model == "swing39":
        topo, params = _load_system(args)
        n = topo.node_count
        if args.schedule:
            proc = _load_schedule(args.schedule, n)
        elif args.perturb_rate > 0 or args.start_draw:
            rng = np.random.default_rng(args.seed)
            count = min(int(rng.poisson(args.perturb_rate * args.horizon * args.dt)),
                        args.horizon - 1)
            times = np.sort(rng.choice(np.arange(1, args.horizon), count, replace=False))
            if args.start_draw:
                times = np.concatenate(([0], times))
            amps = np.zeros((len(times), n))
            std = np.zeros(n)
            std[list(topo.load_nodes)] = np.sqrt(params.load_var)
            amps[:, :] = rng.normal(0.0, 1.0, size=(len(times), n)) * std
            proc = PerturbationProcess(times.astype(np.int64), amps,
                                       target_nodes=topo.load_nodes)
        else:
            proc = PerturbationProcess.none(n)
        try:
            trace = swing.simulate_swing(topo, params, proc, args.horizon, args.dt)
        except SimulationError as exc:
            raise CliError("solver", str(exc))
    else:
        with open(args.model_params) as fh:
            raw = json.load(fh)
        params = LinearDynamicsParams(np.array(raw["transition"]), np.array(raw["initial_state"]))
        proc = (_load_schedule(args.schedule, params.node_count) if args.schedule
                else PerturbationProcess.sample(args.perturb_rate,
                                                raw.get("perturb_variance", 1.0),
                                                params.node_count, args.horizon, args.dt,
                                                args.seed, include_start=args.start_draw))
        trace = simulate_linear(params, proc, args.horizon, args.dt)
    if args.noise_variance > 0:
        trace = sample_measurements(trace, args.noise_variance, args.seed + 1)
    export_trace_csv(trace, args.output)
    print(f"wrote {trace.node_count}x{trace.horizon} trace to {args.output}")
    return 0


def _cmd_train_gft(args) -> int:
    if args.trace:
        traces = tuple(load_trace_csv(p) for p in args.trace)
    else:
        topo, params = _load_system(args)
        n = topo.node_count
        traces = []
        for d in range(args.runs):
            rng = np.random.default_rng(args.seed + d)
            amp = np.zeros((1, n))
            std = np.zeros(n)
            std[list(topo.load_nodes)] = np.sqrt(params.load_var)
            amp[0] = rng.normal(0.0, 1.0, size=n) * std
            proc = PerturbationProcess(np.array([0], dtype=np.int64), amp,
                                       target_nodes=topo.load_nodes)
            traces.append(swing.simulate_swing(topo, params, proc, args.horizon, args.dt))
        traces = tuple(traces)
    tset = gft.TrainingSet(traces, mode=None if args.mode == "auto" else args.mode)
    mode = gft.choose_signal_mode(tset, args.rank_tolerance) if args.mode == "auto" else args.mode
    surr = gft.fit_surrogate(gft.TrainingSet(traces, mode=mode), args.rank_tolerance)
    gft.save_surrogate(surr, args.output)
    print(f"fitted surrogate: N={surr.node_count} rank={surr.bandlimit_rank} mode={surr.mode}")
    return 0


def _parse_pairs(spec: str, n: int) -> list[tuple[int, int]]:
    if spec == "all":
        return [(a, b) for a in range(n) for b in range(n) if a != b]
    if spec.startswith("sample:"):
        count = int(spec.split(":", 1)[1])
        rng = np.random.default_rng(0)
        everything = [(a, b) for a in range(n) for b in range(n) if a != b]
        idx = rng.choice(len(everything), size=min(count, len(everything)), replace=False)
        return sorted(everything[i] for i in idx)
    pairs = []
    for chunk in spec.split(";"):
        a, b = chunk.split(",")
        pairs.append((int(a) - 1, int(b) - 1))
    return pairs


def _cmd_select_relays(args) -> int:
    surr = gft.load_surrogate(args.surrogate)
    pairs = _parse_pairs(args.pairs, surr.node_count)
    cfg = SolverConfig(signal_mean=args.amplitude / 2, noise_variance=args.sigma2,
                       l1_weight=args.l1_weight, positivity_floor=args.floor)
    plans = [select_relays(surr, tx, rx, cfg) for tx, rx in pairs]
    save_plans(plans, args.output, args.meta)
    worst = max(p.residual for p in plans)
    print(f"solved {len(plans)} pairs; worst residual {worst:.3e}; plans in {args.output}")
    return 0


def _cmd_run_ber(args) -> int:
    import csv

    surr = gft.load_surrogate(args.surrogate)
    trace = load_trace_csv(args.trace)
    measured = sample_measurements(trace, args.sigma2, args.seed)
    y = gft.to_mode(surr, measured.values)
    plans = load_plans(args.plans, surr.node_count)
    length = min(args.bits, y.shape[1])
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tx", "rx", "ber"])
        for i, plan in enumerate(plans):
            bits = pipeline.BitStream.random(length, args.seed + 1000 + i)
            rec = pipeline.transmit(plan, y, bits, args.amplitude)
            ber = pipeline.demodulate_and_ber(rec.estimate, bits, args.amplitude)
            writer.writerow([plan.tx + 1, plan.rx + 1, f"{ber:.17g}"])
            if args.dump_audit:
                pipeline.export_record_csv(
                    rec, f"{args.dump_audit}/audit_{plan.tx + 1}_{plan.rx + 1}.csv")
    print(f"wrote per-pair BER to {args.output}")
    return 0


def _cmd_attack_passive(args) -> int:
    surr = gft.load_surrogate(args.surrogate)
    trace = load_trace_csv(args.trace)
    n = surr.node_count
    size = max(1, int(np.ceil(args.fraction * n)))
    sset = adversary.greedy_sampling_set(surr, size)
    measured = sample_measurements(trace, args.sigma2, args.seed)
    y_truth = gft.to_mode(surr, trace.values)
    y_eve = gft.to_mode(surr, measured.values)[list(sset)]
    report = adversary.reconstruct_dynamics(surr, sset, y_eve, truth=y_truth)
    adversary.export_recovery_csv(report, args.output, truth=y_truth,
                                  sample_period=trace.sample_period)
    print(json.dumps({"sampled_set": [s + 1 for s in report.sampled_set],
                      "rank_ok": report.rank_ok, "rmse": report.rmse}))
    return 0


def _cmd_attack_active(args) -> int:
    topo, params = _load_system(args)
    cfg = adversary.ActiveAttackConfig(args.rate, args.variance,
                                       target_nodes=topo.load_nodes, seed=args.seed)
    proc = adversary.jamming_schedule(cfg, topo.node_count, args.horizon, args.dt)
    _save_schedule(proc, topo.node_count, args.output)
    print(f"wrote {len(proc.injection_times)} injections to {args.output}")
    return 0


def _cmd_sweep(args) -> int:
    import os

    try:
        config = experiments.ScenarioConfig.from_json(args.config)
    except FileNotFoundError as exc:
        raise CliError("missing-file", str(exc))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError("data", f"bad config: {exc}")
    try:
        table = experiments.run_scenario(config)
    except SimulationError as exc:
        raise CliError("solver", str(exc))
    os.makedirs(args.output, exist_ok=True)
    out = os.path.join(args.output, "results.csv")
    experiments.export_csv(table, out)
    print(f"wrote {len(table.rows)} rows to {out}")
    return 0


def _cmd_plot_data(args) -> int:
    try:
        table = experiments.load_result_csv(args.table)
    except FileNotFoundError as exc:
        raise CliError("missing-file", str(exc))
    try:
        written = experiments.emit_plot_data(table, args.figure, args.output,
                                             render=not args.no_render)
    except ValueError as exc:
        raise CliError("data", str(exc))
    print("\n".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glsim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_bus(p):
        p.add_argument("--bus-data", default=None,
                       help="bus-system CSV (default: packaged 39-bus set; "
                            "GLSIM_DATA_DIR overrides the directory of relative paths)")

    p = sub.add_parser("simulate", help="generate a dynamics trace CSV")
    p.add_argument("--model", choices=["swing39", "linear"], default="swing39")
    add_bus(p)
    p.add_argument("--model-params", help="linear-model JSON (transition, initial_state)")
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-rate", type=float, default=0.0)
    p.add_argument("--start-draw", action="store_true",
                   help="redraw loads / inject a shock at sample 0")
    p.add_argument("--noise-variance", type=float, default=0.0)
    p.add_argument("--schedule", help="replay an injection schedule CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train-gft", help="fit and store the bandlimited surrogate")
    add_bus(p)
    p.add_argument("--trace", action="append", help="fit from exported trace CSVs")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["auto", "raw", "time_difference"], default="auto")
    p.add_argument("--rank-tolerance", type=float, default=3e-4)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train_gft)

    p = sub.add_parser("select-relays", help="compute relay plans for node pairs")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--pairs", default="all", help='"all", "sample:K", or "tx,rx;tx,rx" (1-based)')
    p.add_argument("--sigma2", type=float, default=1e-5)
    p.add_argument("--amplitude", type=float, default=0.12)
    p.add_argument("--l1-weight", type=float, default=1.0)
    p.add_argument("--floor", type=float, default=1.0)
    p.add_argument("--meta", help="JSON sidecar path for solver metadata")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_select_relays)

    p = sub.add_parser("run-ber", help="run the pipeline over a trace and report BER")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--plans", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--sigma2", type=float, default=1e-5)
    p.add_argument("--amplitude", type=float, default=0.12)
    p.add_argument("--bits", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-audit", help="directory for per-pair stage dumps")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_run_ber)

    p = sub.add_parser("attack-passive", help="greedy sampling-set recovery attempt")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_attack_passive)

    p = sub.add_parser("attack-active", help="draw a jamming schedule for replay")
    add_bus(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--variance", type=float, default=5.0)
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_attack_active)

    p = sub.add_parser("sweep", help="run a full scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot-data", help="emit per-curve series files for a figure")
    p.add_argument("--table", required=True, help="results.csv from a sweep")
    p.add_argument("--figure", required=True, choices=list(experiments.FIGURES))
    p.add_argument("--no-render", action="store_true", help="skip the PNG")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"category": exc.category, "message": str(exc)}), file=sys.stderr)
        return _EXIT_CODES[exc.category]
    except FileNotFoundError as exc:
        print(json.dumps({"category": "missing-file", "message": str(exc)}), file=sys.stderr)
        return _EXIT_CODES["missing-file"]
    except (ValueError, KeyError) as exc:
        print(json.dumps({"category": "data", "message": str(exc)}), file=sys.stderr)
        return _EXIT_CODES["data"]
    except Exception as exc:  # keep the contract: nonzero + category
        print(json.dumps({"category": "internal", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return _EXIT_CODES["internal"]


if __name__ == "__main__":
    sys.exit(main())
