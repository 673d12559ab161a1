"""Bus-system swing dynamics: generator ODEs coupled to algebraic load flow.

Generator buses carry second-order rotor dynamics with a PI speed controller;
load buses are algebraic (their angles solve the active power balance at unit
voltage each step).  The recorded signal is the per-bus speed deviation in
rad/s: generator rows come straight from the integrated states, load rows from
implicit differentiation of the power-balance constraint, which keeps the
trace consistent with the instantaneous dynamics rather than a finite
difference of angles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from .netmodel import DynamicsTrace, NetworkTopology, PerturbationProcess, SimulationError

__all__ = ["SwingParams", "load_bus_system", "simulate_swing"]

SYNC_SPEED = 2.0 * np.pi * 60.0


@dataclass(frozen=True)
class SwingParams:
    """Electrical and control parameters of the swing model.

    ``admittance_real``/``admittance_imag`` are the full symmetric bus
    matrices (G and B, per unit).  ``inertia`` is per generator, aligned with
    the topology's sorted generator list.  ``load_mean``/``load_var`` give the
    reference net injection (negative = consumption) and the redraw variance
    per load bus, aligned with the sorted load list.
    """

    admittance_real: np.ndarray
    admittance_imag: np.ndarray
    inertia: np.ndarray
    damping: float
    gain_p: float
    gain_i: float
    load_mean: np.ndarray
    load_var: np.ndarray
    sync_speed: float = SYNC_SPEED

    def __post_init__(self):
        g, b = np.asarray(self.admittance_real, float), np.asarray(self.admittance_imag, float)
        if g.shape != b.shape or g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("admittance matrices must be square and equal-shaped")
        if not (np.allclose(g, g.T) and np.allclose(b, b.T)):
            raise ValueError("admittance matrices must be symmetric")
        if np.any(np.asarray(self.inertia) <= 0):
            raise ValueError("every generator inertia must be positive")
        if self.sync_speed <= 0:
            raise ValueError("sync_speed must be positive")
        if self.gain_i <= 0:
            raise ValueError("integral gain must be positive (sets the torque reference)")
        object.__setattr__(self, "admittance_real", g)
        object.__setattr__(self, "admittance_imag", b)
        object.__setattr__(self, "inertia", np.asarray(self.inertia, float))
        object.__setattr__(self, "load_mean", np.asarray(self.load_mean, float))
        object.__setattr__(self, "load_var", np.asarray(self.load_var, float))


def load_bus_system(path) -> tuple[NetworkTopology, SwingParams]:
    """Read a bus-system CSV: a branch block, a generator block, a load block.

    Branch rows hold the series admittance (from,to,G,B) of each line with
    1-based bus ids; the loader builds the full bus matrices (off-diagonal
    -G-jB, diagonals accumulate incident admittance).  Generator rows are
    (bus,H,K_P,K_I,D); gains and damping must agree across rows.  Load rows
    are (bus,PL_mean,PL_var) with PL as net injection (negative consumes);
    unlisted non-generator buses default to zero load.
    """
    branches, gens, loads = [], {}, {}
    section = None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            head = row[0].strip().lower()
            if head == "from":
                section = "branch"
                continue
            if head == "bus":
                section = "generator" if len(row) >= 5 and row[1].strip().upper() == "H" else "load"
                continue
            if section == "branch":
                branches.append((int(row[0]), int(row[1]), float(row[2]), float(row[3])))
            elif section == "generator":
                gens[int(row[0])] = tuple(float(v) for v in row[1:5])
            elif section == "load":
                loads[int(row[0])] = (float(row[1]), float(row[2]))
            else:
                raise ValueError(f"{path}: data row before any section header")
    if not branches or not gens:
        raise ValueError(f"{path}: missing branch or generator block")
    n = max(max(a, b) for a, b, _, _ in branches)
    g_mat = np.zeros((n, n))
    b_mat = np.zeros((n, n))
    edges = []
    for a, b, g, susc in branches:
        i, j = a - 1, b - 1
        edges.append((i, j))
        g_mat[i, j] -= g
        g_mat[j, i] -= g
        b_mat[i, j] -= susc
        b_mat[j, i] -= susc
        g_mat[i, i] += g
        g_mat[j, j] += g
        b_mat[i, i] += susc
        b_mat[j, j] += susc
    topo = build_edges_topology(edges, n, tuple(b - 1 for b in sorted(gens)))
    gain_rows = {v[1:] for v in gens.values()}
    if len(gain_rows) != 1:
        raise ValueError(f"{path}: generator rows disagree on K_P/K_I/D")
    k_p, k_i, damping = gain_rows.pop()
    inertia = np.array([gens[g + 1][0] for g in topo.generator_nodes])
    load_mean = np.array([loads.get(l + 1, (0.0, 0.0))[0] for l in topo.load_nodes])
    load_var = np.array([loads.get(l + 1, (0.0, 0.0))[1] for l in topo.load_nodes])
    params = SwingParams(g_mat, b_mat, inertia, damping, k_p, k_i, load_mean, load_var)
    return topo, params


def build_edges_topology(edges, node_count, generators) -> NetworkTopology:
    """Topology from an undirected branch list (both directions recorded)."""
    from .netmodel import build_topology

    return build_topology(edges, node_count, generators, undirected=True)


@njit(cache=True)
def _flow(theta, g_diag, edge_i, edge_j, edge_g, edge_b):
    p = g_diag.copy()
    for e in range(edge_i.shape[0]):
        d = theta[edge_i[e]] - theta[edge_j[e]]
        p[edge_i[e]] += edge_g[e] * np.cos(d) + edge_b[e] * np.sin(d)
    return p


@njit(cache=True)
def _jac_blocks(theta, edge_i, edge_j, edge_g, edge_b, load_pos, gen_pos, nl, ng):
    # J_ll[r, c] = dP_load_r / dtheta_load_c ; J_lg likewise for generator columns.
    j_ll = np.zeros((nl, nl))
    j_lg = np.zeros((nl, ng))
    for e in range(edge_i.shape[0]):
        i, j = edge_i[e], edge_j[e]
        r = load_pos[i]
        if r < 0:
            continue
        d = theta[i] - theta[j]
        c = -edge_g[e] * np.sin(d) + edge_b[e] * np.cos(d)
        j_ll[r, r] += c
        cj = load_pos[j]
        if cj >= 0:
            j_ll[r, cj] -= c
        else:
            j_lg[r, gen_pos[j]] -= c
    return j_ll, j_lg


@njit(cache=True)
def _newton_loads(theta, pl, g_diag, edge_i, edge_j, edge_g, edge_b,
                  load_idx, load_pos, gen_pos, nl, ng, tol, maxit):
    """Damped Newton on the load power balance; mutates theta[load_idx]."""
    it = 0
    while it < maxit:
        p = _flow(theta, g_diag, edge_i, edge_j, edge_g, edge_b)
        resid = p[load_idx] - pl
        r0 = np.max(np.abs(resid))
        if r0 <= tol:
            return it, 0
        j_ll, _ = _jac_blocks(theta, edge_i, edge_j, edge_g, edge_b, load_pos, gen_pos, nl, ng)
        dx = np.linalg.solve(j_ll, -resid)
        if not np.all(np.isfinite(dx)):
            return it, 2
        base = theta[load_idx].copy()
        step = 1.0
        accepted = False
        while step > 2.0 ** -30:
            theta[load_idx] = base + step * dx
            p = _flow(theta, g_diag, edge_i, edge_j, edge_g, edge_b)
            r1 = np.max(np.abs(p[load_idx] - pl))
            if r1 <= (1.0 - 0.5 * step) * r0:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            theta[load_idx] = base
            return it, 1
        it += 1
    p = _flow(theta, g_diag, edge_i, edge_j, edge_g, edge_b)
    if np.max(np.abs(p[load_idx] - pl)) <= tol:
        return it, 0
    return it, 1


@njit(cache=True)
def _load_speed(theta, dw_gen, edge_i, edge_j, edge_g, edge_b, load_pos, gen_pos, nl, ng):
    # Implicit differentiation of the balance: J_ll * dtheta_l/dt = -J_lg * dw_gen.
    j_ll, j_lg = _jac_blocks(theta, edge_i, edge_j, edge_g, edge_b, load_pos, gen_pos, nl, ng)
    return np.linalg.solve(j_ll, -(j_lg @ dw_gen))


@njit(cache=True)
def _swing_core(thg0, z0, theta, g_diag, edge_i, edge_j, edge_g, edge_b,
                gen_idx, load_idx, load_pos, gen_pos, inertia, damping,
                gain_p, gain_i, sync_speed, pl_ref, ev_times, ev_deltas,
                horizon, dt, tol, maxit):
    ng = gen_idx.shape[0]
    nl = load_idx.shape[0]
    n = ng + nl
    x = np.zeros((n, horizon))
    thg = thg0.copy()
    dw = np.zeros(ng)
    z = z0.copy()
    pl = pl_ref.copy()
    gain = sync_speed / (2.0 * inertia)
    spike = np.zeros(nl)
    ev = 0
    for k in range(horizon):
        spike[:] = 0.0
        while ev < ev_times.shape[0] and ev_times[ev] == k:
            pre = theta[load_idx].copy()
            pl = pl_ref + ev_deltas[ev]
            it, status = _newton_loads(theta, pl, g_diag, edge_i, edge_j, edge_g, edge_b,
                                       load_idx, load_pos, gen_pos, nl, ng, tol, maxit)
            if status != 0:
                return x, 1, k
            if k > 0:
                # a load step inside the sampling window shows up in the
                # frequency estimate as the angle jump over one period
                spike += (theta[load_idx] - pre) / dt
            ev += 1
        # record the sampled speed deviations
        for i in range(ng):
            x[gen_idx[i], k] = dw[i]
        dwl = _load_speed(theta, dw, edge_i, edge_j, edge_g, edge_b, load_pos, gen_pos, nl, ng)
        for i in range(nl):
            x[load_idx[i], k] = dwl[i] + spike[i]
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(theta))):
            return x, 2, k
        if k == horizon - 1:
            break
        # one RK4 step on (theta_gen, dw, z); the algebraic solve runs per stage
        a_thg = thg.copy()
        a_dw = dw.copy()
        a_z = z.copy()
        k_thg = np.zeros((4, ng))
        k_dw = np.zeros((4, ng))
        k_z = np.zeros((4, ng))
        for stage in range(4):
            if stage == 0:
                s_thg, s_dw, s_z = a_thg, a_dw, a_z
            elif stage < 3:
                s_thg = a_thg + 0.5 * dt * k_thg[stage - 1]
                s_dw = a_dw + 0.5 * dt * k_dw[stage - 1]
                s_z = a_z + 0.5 * dt * k_z[stage - 1]
            else:
                s_thg = a_thg + dt * k_thg[2]
                s_dw = a_dw + dt * k_dw[2]
                s_z = a_z + dt * k_z[2]
            for i in range(ng):
                theta[gen_idx[i]] = s_thg[i]
            it, status = _newton_loads(theta, pl, g_diag, edge_i, edge_j, edge_g, edge_b,
                                       load_idx, load_pos, gen_pos, nl, ng, tol, maxit)
            if status != 0:
                return x, 1, k
            p = _flow(theta, g_diag, edge_i, edge_j, edge_g, edge_b)
            for i in range(ng):
                torque = -(gain_p * s_dw[i] + gain_i * s_z[i])
                k_dw[stage, i] = gain[i] * (torque - p[gen_idx[i]] - damping * s_dw[i])
                k_thg[stage, i] = s_dw[i]
                k_z[stage, i] = s_dw[i]
        thg = a_thg + dt / 6.0 * (k_thg[0] + 2.0 * k_thg[1] + 2.0 * k_thg[2] + k_thg[3])
        dw = a_dw + dt / 6.0 * (k_dw[0] + 2.0 * k_dw[1] + 2.0 * k_dw[2] + k_dw[3])
        z = a_z + dt / 6.0 * (k_z[0] + 2.0 * k_z[1] + 2.0 * k_z[2] + k_z[3])
        for i in range(ng):
            theta[gen_idx[i]] = thg[i]
        it, status = _newton_loads(theta, pl, g_diag, edge_i, edge_j, edge_g, edge_b,
                                   load_idx, load_pos, gen_pos, nl, ng, tol, maxit)
        if status != 0:
            return x, 1, k
    return x, 0, horizon


def _edge_arrays(params: SwingParams):
    g, b = params.admittance_real, params.admittance_imag
    n = g.shape[0]
    mask = (np.abs(g) + np.abs(b) > 0) & ~np.eye(n, dtype=bool)
    ei, ej = np.nonzero(mask)
    return ei.astype(np.int64), ej.astype(np.int64), g[ei, ej].copy(), b[ei, ej].copy()


def simulate_swing(
    topology: NetworkTopology,
    params: SwingParams,
    perturbations: PerturbationProcess,
    horizon: int,
    dt: float,
    newton_tol: float = 1e-9,
    newton_maxit: int = 50,
) -> DynamicsTrace:
    """Integrate the swing DAE with fixed-step RK4 at step ``dt``.

    The run starts from an exact equilibrium at the reference loads (zero
    speed deviations, torque reference balancing the initial flow), so a
    perturbation-free run stays identically at zero.  Perturbation events
    rewrite the load deviation on their target buses from that sample onward.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = topology.node_count
    if params.admittance_real.shape[0] != n:
        raise ValueError("params do not match topology size")
    gen_idx = np.asarray(topology.generator_nodes, dtype=np.int64)
    load_idx = np.asarray(topology.load_nodes, dtype=np.int64)
    load_pos = np.full(n, -1, dtype=np.int64)
    load_pos[load_idx] = np.arange(len(load_idx))
    gen_pos = np.full(n, -1, dtype=np.int64)
    gen_pos[gen_idx] = np.arange(len(gen_idx))
    ei, ej, eg, eb = _edge_arrays(params)
    g_diag = np.diag(params.admittance_real).copy()

    # reference equilibrium: solve load angles, then set the torque reference
    theta = np.zeros(n)
    it, status = _newton_loads(theta, params.load_mean, g_diag, ei, ej, eg, eb,
                               load_idx, load_pos, gen_pos, len(load_idx), len(gen_idx),
                               newton_tol, newton_maxit)
    if status != 0:
        raise SimulationError(
            f"load-flow Newton failed at initialization (status {status}, {it} iterations)")
    p0 = _flow(theta, g_diag, ei, ej, eg, eb)
    z0 = -p0[gen_idx] / params.gain_i
    thg0 = theta[gen_idx].copy()

    # compose per-event absolute load deviations (events rewrite their targets)
    times = perturbations.injection_times
    deltas = np.zeros((len(times), len(load_idx)))
    current = np.zeros(len(load_idx))
    for e in range(len(times)):
        amp = perturbations.injection_amplitudes[e]
        mask = perturbations.event_mask(e, n)
        hit = mask[load_idx]
        current[hit] = amp[load_idx[hit]]
        deltas[e] = current
    if len(times) and times[-1] >= horizon:
        raise ValueError("injection time beyond horizon")

    x, status, step = _swing_core(
        thg0, z0, theta, g_diag, ei, ej, eg, eb, gen_idx, load_idx, load_pos, gen_pos,
        params.inertia, params.damping, params.gain_p, params.gain_i, params.sync_speed,
        params.load_mean, times, deltas, horizon, dt, newton_tol, newton_maxit)
    if status == 1:
        raise SimulationError(f"load-flow Newton did not converge at step {step}")
    if status == 2:
        raise SimulationError(f"state diverged (non-finite) at step {step}")
    return DynamicsTrace(x, dt)
