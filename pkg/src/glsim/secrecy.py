"""Secrecy-rate evaluation and offline relay-weight optimization.

The relay weights for a (Tx, Rx) pair minimize a convexified secrecy
objective over the surrogate: a successive convex approximation re-linearizes
the legitimate-capacity term through a slack variable, and each convex
subproblem is solved by an accelerated proximal method.  The subproblem
nonsmooth part is the l1 weight penalty plus the max of the two eavesdropper
terms; its proximal map splits into coordinate-wise soft thresholds and an
exact two-coordinate solve on (Tx, Rx).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .gft import GftSurrogate

__all__ = [
    "SecrecyReport",
    "RelayPlan",
    "SolverConfig",
    "secrecy_rate",
    "inner_objective",
    "penalized_objective",
    "solve_inner_convex",
    "select_relays",
    "sparsify_weights",
    "save_plans",
    "load_plans",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SecrecyReport:
    """Capacities and clipped secrecy rate for one weight vector.

    Capacities with a zero denominator are stored as ``inf`` and reported by
    the ``*_unbounded`` properties instead of pretending to be numbers.
    """

    legitimate_capacity: float
    eve_capacity_tx: float
    eve_capacity_rx: float
    secrecy_rate: float

    @property
    def legitimate_unbounded(self) -> bool:
        return math.isinf(self.legitimate_capacity)

    @property
    def eve_tx_unbounded(self) -> bool:
        return math.isinf(self.eve_capacity_tx)

    @property
    def eve_rx_unbounded(self) -> bool:
        return math.isinf(self.eve_capacity_rx)

    @property
    def secrecy_unbounded(self) -> bool:
        return math.isinf(self.secrecy_rate)

    def as_dict(self) -> dict:
        return {
            "legitimate_capacity": self.legitimate_capacity,
            "eve_capacity_tx": self.eve_capacity_tx,
            "eve_capacity_rx": self.eve_capacity_rx,
            "secrecy_rate": self.secrecy_rate,
        }


@dataclass(frozen=True)
class RelayPlan:
    """Optimized weights for one (tx, rx) pair plus the solver audit trail."""

    tx: int
    rx: int
    weights: np.ndarray
    relay_set: tuple[int, ...]
    residual: float
    slack: float
    report: SecrecyReport
    solver_trace: tuple[float, ...]

    @property
    def node_count(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the relay-selection solver (defaults match the shipped runs)."""

    l1_weight: float = 1.0
    signal_mean: float = 1.0
    noise_variance: float = 0.0
    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 40
    inner_tolerance: float = 1e-9
    max_inner_iterations: int = 5000
    sparsify_threshold: float | None = None
    positivity_floor: float = 1e-2
    slack_margin: float = 1e-6
    slack_floor_rel: float = 1e-18

    def __post_init__(self):
        if self.signal_mean <= 0:
            raise ValueError("signal_mean must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")
        for name in ("l1_weight",):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("outer_tolerance", "inner_tolerance", "positivity_floor",
                     "slack_margin", "slack_floor_rel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _as_matrix(basis) -> np.ndarray:
    if isinstance(basis, GftSurrogate):
        return basis.surrogate
    return np.asarray(basis, dtype=float)


def _capacity(num: float, den: float) -> float:
    if den == 0.0:
        return math.inf
    return math.log2(1.0 + num / den)


def secrecy_rate(weights, basis_or_trace, signal_mean: float, noise_variance: float,
                 tx: int, rx: int) -> SecrecyReport:
    """Evaluate legitimate/eavesdropper capacities and the clipped secrecy rate.

    The legitimate denominator is the residual energy plus the weighted
    sensor-noise power; the eavesdropper denominators are noiseless (an upper
    bound on what an interceptor at tx or rx achieves).
    """
    if tx == rx:
        raise ValueError("tx and rx must differ")
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    m = _as_matrix(basis_or_trace)
    alpha = np.asarray(weights, dtype=float)
    if alpha.shape != (m.shape[0],):
        raise ValueError("weights length does not match matrix rows")
    e2 = signal_mean**2
    legit_den = float(np.linalg.norm(m.T @ alpha) ** 2 + noise_variance * np.dot(alpha, alpha))
    c_legit = _capacity(e2, legit_den)
    c_eves = {}
    for j, name in ((tx, "tx"), (rx, "rx")):
        den = float(alpha[j] ** 2 * np.dot(m[j], m[j]))
        c_eves[name] = _capacity(e2, den)
    worst_eve = max(c_eves.values())
    if math.isinf(worst_eve):
        rate = 0.0
    elif math.isinf(c_legit):
        rate = math.inf
    else:
        rate = max(0.0, c_legit - worst_eve)
    return SecrecyReport(c_legit, c_eves["tx"], c_eves["rx"], rate)


# ---------------------------------------------------------------------------
# inner convex subproblem (numba core)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _phi(a, q):
    return np.log1p(q / (a * a)) / LN2


@njit(cache=True)
def _prox_1d(a, gamma, q, m):
    # minimize 0.5 (u-a)^2 + gamma * phi(u, q) over u >= m; derivative is
    # increasing, so bisection on a safe bracket
    def deriv(u):
        return u - a + gamma * (-2.0 / LN2) * q / (u * (u * u + q))

    lo = m
    if deriv(lo) >= 0.0:
        return m
    hi = max(m, a) + gamma * (2.0 / LN2) * q / (m * (m * m + q)) + 1.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if deriv(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _prox_pair(u0, v0, gamma, w_l1, qt, qr, floor, has_phi):
    """Exact prox of gamma*(l1 + max(phi_tx, phi_rx)) on the (tx, rx) block."""
    a = u0 - gamma * w_l1
    b = v0 - gamma * w_l1
    if not has_phi:
        return max(a, floor), max(b, floor)
    # candidate 1: tx term attains the max
    u1 = _prox_1d(a, gamma, qt, floor)
    v1 = max(b, floor)
    f1 = 0.5 * (u1 - a) ** 2 + 0.5 * (v1 - b) ** 2 + gamma * max(_phi(u1, qt), _phi(v1, qr))
    # candidate 2: rx term attains the max
    v2 = _prox_1d(b, gamma, qr, floor)
    u2 = max(a, floor)
    f2 = 0.5 * (u2 - a) ** 2 + 0.5 * (v2 - b) ** 2 + gamma * max(_phi(u2, qt), _phi(v2, qr))
    # candidate 3: tie curve phi_tx(u) = phi_rx(v), parametrized u = sqrt(qt) w
    sqt = math.sqrt(qt)
    sqr = math.sqrt(qr)
    w_lo = floor * max(1.0 / sqt, 1.0 / sqr)

    def jder(w):
        return (qt + qr) * w - (a * sqt + b * sqr) - (2.0 * gamma / LN2) / (w * (w * w + 1.0))

    if jder(w_lo) >= 0.0:
        w = w_lo
    else:
        hi = w_lo + (max(0.0, a * sqt + b * sqr) + (2.0 * gamma / LN2) / (w_lo * (w_lo**2 + 1.0)) + 1.0) / (qt + qr)
        lo = w_lo
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if jder(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        w = 0.5 * (lo + hi)
    u3 = sqt * w
    v3 = sqr * w
    f3 = 0.5 * (u3 - a) ** 2 + 0.5 * (v3 - b) ** 2 + gamma * max(_phi(u3, qt), _phi(v3, qr))
    if f1 <= f2 and f1 <= f3:
        return u1, v1
    if f2 <= f3:
        return u2, v2
    return u3, v3


@njit(cache=True)
def _objective(alpha, qm, c0, w_l1, tx, rx, qt, qr, has_phi):
    val = c0 * np.dot(alpha, qm @ alpha) + w_l1 * np.sum(np.abs(alpha))
    if has_phi:
        val += max(_phi(alpha[tx], qt), _phi(alpha[rx], qr))
    return val


@njit(cache=True)
def _prox_step(alpha, qm, c0, gamma, w_l1, tx, rx, qt, qr, floor, has_phi):
    grad = 2.0 * c0 * (qm @ alpha)
    z = alpha - gamma * grad
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        if i == tx or i == rx:
            continue
        s = abs(z[i]) - gamma * w_l1
        out[i] = math.copysign(s, z[i]) if s > 0.0 else 0.0
    u, v = _prox_pair(z[tx], z[rx], gamma, w_l1, qt, qr, floor, has_phi)
    out[tx] = u
    out[rx] = v
    return out


@njit(cache=True)
def _inner_core(alpha0, qm, lam_max, c0, w_l1, tx, rx, qt, qr, floor, has_phi,
                max_iter, tol):
    """Monotone accelerated proximal gradient on the convex subproblem."""
    gamma = 1.0 / (2.0 * c0 * lam_max)
    alpha = alpha0.copy()
    y = alpha0.copy()
    best = _objective(alpha, qm, c0, w_l1, tx, rx, qt, qr, has_phi)
    best_at_check = best
    t = 1.0
    it = 0
    while it < max_iter:
        z = _prox_step(y, qm, c0, gamma, w_l1, tx, rx, qt, qr, floor, has_phi)
        fz = _objective(z, qm, c0, w_l1, tx, rx, qt, qr, has_phi)
        alpha_prev = alpha
        if fz <= best:
            alpha = z
            best = fz
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = alpha + (t / t_next) * (z - alpha) + ((t - 1.0) / t_next) * (alpha - alpha_prev)
        t = t_next
        it += 1
        if it % 16 == 0 or it == max_iter:
            # a plain step from the incumbent never increases the objective;
            # its displacement doubles as the stationarity measure
            plain = _prox_step(alpha, qm, c0, gamma, w_l1, tx, rx, qt, qr, floor, has_phi)
            fp = _objective(plain, qm, c0, w_l1, tx, rx, qt, qr, has_phi)
            move = np.max(np.abs(plain - alpha))
            if fp <= best:
                alpha = plain
                best = fp
            stalled = best_at_check - best <= 1e-15 * max(1.0, abs(best))
            best_at_check = best
            if move <= tol * max(1.0, np.max(np.abs(alpha))) or (stalled and it > 64):
                break
    return alpha, best, it


def _phi_params(gamma_mat, tx, rx, e2):
    ct = float(np.dot(gamma_mat[tx], gamma_mat[tx]))
    cr = float(np.dot(gamma_mat[rx], gamma_mat[rx]))
    has_phi = ct > 0.0 and cr > 0.0
    qt = e2 / ct if ct > 0 else 1.0
    qr = e2 / cr if cr > 0 else 1.0
    return qt, qr, has_phi


def _quad(gamma_mat, alpha, sigma2):
    return float(np.linalg.norm(gamma_mat.T @ alpha) ** 2 + sigma2 * np.dot(alpha, alpha))


def _taylor_slope(beta_ini, e2):
    # slope of the linearized capacity term at the slack expansion point
    return e2 / (LN2 * (beta_ini**2 + e2 * beta_ini))


def inner_objective(basis, alpha, beta_ini, config: SolverConfig, tx: int, rx: int) -> float:
    """Convex subproblem objective at slack = quadratic value (its optimum).

    Shared between the solver and independent oracles so both score the same
    function: slope * (quad - beta_ini) + max eavesdropper term + l1 penalty.
    """
    g = _as_matrix(basis)
    alpha = np.asarray(alpha, dtype=float)
    e2 = config.signal_mean**2
    qt, qr, has_phi = _phi_params(g, tx, rx, e2)
    c0 = _taylor_slope(beta_ini, e2)
    val = c0 * (_quad(g, alpha, config.noise_variance) - beta_ini)
    val += config.l1_weight * float(np.sum(np.abs(alpha)))
    if has_phi:
        val += max(math.log2(1.0 + qt / alpha[tx] ** 2), math.log2(1.0 + qr / alpha[rx] ** 2))
    return val


def penalized_objective(basis, alpha, config: SolverConfig, tx: int, rx: int) -> float:
    """Exact (un-linearized) objective tracked across outer iterations."""
    g = _as_matrix(basis)
    alpha = np.asarray(alpha, dtype=float)
    e2 = config.signal_mean**2
    beta = max(_quad(g, alpha, config.noise_variance), config.slack_floor_rel * e2)
    val = -math.log2(1.0 + e2 / beta)
    val += config.l1_weight * float(np.sum(np.abs(alpha)))
    qt, qr, has_phi = _phi_params(g, tx, rx, e2)
    if has_phi:
        val += max(math.log2(1.0 + qt / alpha[tx] ** 2), math.log2(1.0 + qr / alpha[rx] ** 2))
    return val


def solve_inner_convex(basis, tx: int, rx: int, alpha_ini, beta_ini: float,
                       config: SolverConfig) -> tuple[np.ndarray, float, float]:
    """Solve one convex subproblem from a feasible start.

    Returns (weights, slack, objective) with the slack on the constraint
    boundary, so the constraint holds with zero violation.  The returned
    objective never exceeds the starting one.
    """
    g = _as_matrix(basis)
    alpha0 = np.asarray(alpha_ini, dtype=float).copy()
    sigma2 = config.noise_variance
    floor = config.positivity_floor
    if alpha0[tx] < floor - 1e-12 or alpha0[rx] < floor - 1e-12:
        raise ValueError("infeasible start: tx/rx weights below the positivity floor")
    q0 = _quad(g, alpha0, sigma2)
    if q0 > beta_ini + 1e-9 * max(1.0, beta_ini):
        raise ValueError("infeasible start: slack below the constraint value")
    e2 = config.signal_mean**2
    qt, qr, has_phi = _phi_params(g, tx, rx, e2)
    c0 = _taylor_slope(beta_ini, e2)
    qm = g @ g.T + sigma2 * np.eye(g.shape[0])
    lam_max = float(np.linalg.eigvalsh(qm)[-1])
    if lam_max <= 0:
        lam_max = max(sigma2, 1e-15)
    alpha, _, _ = _inner_core(alpha0, qm, lam_max, c0, config.l1_weight, tx, rx,
                              qt, qr, floor, has_phi,
                              config.max_inner_iterations, config.inner_tolerance)
    start_obj = inner_objective(g, alpha0, beta_ini, config, tx, rx)
    out_obj = inner_objective(g, alpha, beta_ini, config, tx, rx)
    if out_obj > start_obj:
        alpha, out_obj = alpha0, start_obj
    return alpha, _quad(g, alpha, sigma2), out_obj


def sparsify_weights(weights, threshold: float, exempt: tuple[int, ...] = ()) -> tuple[np.ndarray, tuple[int, ...]]:
    """Zero entries below ``threshold`` in magnitude (exempt indices keep).

    Returns the cleaned vector and the surviving non-exempt support.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    alpha = np.asarray(weights, dtype=float).copy()
    mask = np.abs(alpha) < threshold
    mask[list(exempt)] = False
    alpha[mask] = 0.0
    support = tuple(int(i) for i in np.nonzero(alpha)[0] if i not in exempt)
    return alpha, support


def select_relays(surrogate, tx: int, rx: int, config: SolverConfig,
                  initial_weights=None) -> RelayPlan:
    """Run the offline relay selection for one (tx, rx) pair.

    The start point is the least-squares null-space weight vector with unit
    tx/rx weights; each outer round re-linearizes the capacity term at the
    current slack and solves the convex subproblem.  The loop stops when the
    exact objective stalls, then small weights are clipped to exact zeros.
    """
    g = _as_matrix(surrogate)
    n = g.shape[0]
    if tx == rx:
        raise ValueError("tx and rx must differ")
    if not (0 <= tx < n and 0 <= rx < n):
        raise ValueError("tx/rx out of range")
    sigma2 = config.noise_variance
    if initial_weights is not None:
        alpha = np.asarray(initial_weights, dtype=float).copy()
        alpha[tx] = max(alpha[tx], config.positivity_floor)
        alpha[rx] = max(alpha[rx], config.positivity_floor)
    else:
        others = [i for i in range(n) if i not in (tx, rx)]
        rhs = -(g[tx] + g[rx])
        sol, *_ = np.linalg.lstsq(g[others].T, rhs, rcond=None)
        alpha = np.zeros(n)
        alpha[tx] = alpha[rx] = 1.0
        alpha[others] = sol
    e2 = config.signal_mean**2
    slack_floor = config.slack_floor_rel * e2
    beta = _quad(g, alpha, sigma2) + config.slack_margin
    trace = [penalized_objective(g, alpha, config, tx, rx)]
    for _ in range(config.max_outer_iterations):
        cand, cand_beta, _ = solve_inner_convex(g, tx, rx, alpha, beta, config)
        f_new = penalized_objective(g, cand, config, tx, rx)
        if f_new > trace[-1]:
            break
        alpha = cand
        delta = trace[-1] - f_new
        trace.append(f_new)
        beta = max(cand_beta, slack_floor)
        if delta <= config.outer_tolerance:
            break
    threshold = config.sparsify_threshold
    if threshold is None:
        threshold = 1e-6 * float(np.max(np.abs(alpha)))
    alpha, relay_set = sparsify_weights(alpha, threshold, exempt=(tx, rx))
    residual = float(np.linalg.norm(g.T @ alpha))
    report = secrecy_rate(alpha, g, config.signal_mean, sigma2, tx, rx)
    return RelayPlan(tx, rx, alpha, relay_set, residual,
                     _quad(g, alpha, sigma2), report, tuple(trace))


def save_plans(plans: list[RelayPlan], csv_path, meta_path=None) -> None:
    """Persist plans as weight rows (1-based node ids) plus a JSON sidecar."""
    import csv as _csv

    with open(csv_path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["tx", "rx", "node", "weight"])
        for plan in plans:
            for node in np.nonzero(plan.weights)[0]:
                writer.writerow([plan.tx + 1, plan.rx + 1, int(node) + 1,
                                 f"{plan.weights[node]:.17g}"])
    if meta_path is not None:
        meta = []
        for plan in plans:
            meta.append({
                "tx": plan.tx + 1,
                "rx": plan.rx + 1,
                "iterations": len(plan.solver_trace) - 1,
                "residual": plan.residual,
                "slack": plan.slack,
                "relay_count": len(plan.relay_set),
                "secrecy": plan.report.as_dict(),
                "objective_trace": list(plan.solver_trace),
            })
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True, default=lambda x: repr(x))


def load_plans(csv_path, node_count: int) -> list[RelayPlan]:
    """Rebuild bare plans (weights only) from a plan CSV."""
    import csv as _csv

    with open(csv_path, newline="") as fh:
        rows = list(_csv.reader(fh))
    if not rows or rows[0] != ["tx", "rx", "node", "weight"]:
        raise ValueError(f"{csv_path}: not a relay-plan CSV")
    grouped: dict[tuple[int, int], np.ndarray] = {}
    for tx, rx, node, weight in rows[1:]:
        key = (int(tx) - 1, int(rx) - 1)
        grouped.setdefault(key, np.zeros(node_count))[int(node) - 1] = float(weight)
    plans = []
    for (tx, rx), weights in grouped.items():
        relay_set = tuple(int(i) for i in np.nonzero(weights)[0] if i not in (tx, rx))
        plans.append(RelayPlan(tx, rx, weights, relay_set, math.nan, math.nan,
                               SecrecyReport(math.nan, math.nan, math.nan, math.nan), ()))
    return plans
