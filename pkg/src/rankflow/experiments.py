"""Orchestrated studies: coupled hydrodynamic convergence, the martingale
problem statistic, and pathwise stability in the driving signal.

All studies are reproducible from (config, seed): replica r draws its
noise from streams keyed by a seed derived from (seed, r), and results are
aggregated in replica order regardless of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bumps import Bump1D
from .coefficients import CoefficientSet
from .measures import GridFunction, InitialDistribution, empirical_cdf, l1_cdf_distance, w1
from .particles import simulate
from .randomness import (
    STREAM_COMMON,
    BrownianPath,
    make_noise_bundle,
    replica_seed,
    sample_path,
)
from .solver import SolverConfig, analytic_constant_solution, solve

__all__ = [
    "ExperimentReport",
    "convergence_study",
    "martingale_statistic",
    "stability_experiment",
    "PhiConst",
    "PhiLinear",
    "PhiSquare",
    "PhiProduct",
    "PhiTanh",
    "PsiConst",
    "PsiTanhPairing",
    "PsiCosNoise",
    "PsiMixed",
    "bias_allowance",
    "default_martingale_suite",
]


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    params: dict
    columns: tuple
    rows: tuple
    provenance: dict
    summary: dict = field(default_factory=dict)


def _map_replicas(fn, replicas: int, threads: int):
    """Evaluate fn(replica) for replica = 0..replicas-1, results in replica
    order; the thread cap never affects the values."""
    if threads <= 1:
        return [fn(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicas)))


def _require_constant(expr, name: str) -> float:
    grid = np.linspace(0.0, 1.0, 2001)
    vals = np.asarray(expr(grid), dtype=np.float64)
    if vals.ndim == 0:
        return float(vals)
    if vals.max() - vals.min() > 1e-12:
        raise ValueError(f"analytic reference needs constant coefficients; {name} varies")
    return float(vals[0])


def convergence_study(
    cs: CoefficientSet,
    init: InitialDistribution,
    n_list,
    replicas: int,
    solver_config: SolverConfig,
    snapshot_times,
    seed: int,
    T: float,
    steps: int,
    reference: str = "spde",
    threads: int = 1,
) -> ExperimentReport:
    """Coupled convergence of the particle empirical CDF to the limit CDF.

    Per replica one common path W drives both the n-particle system and the
    reference: the finite-volume solution (reference="spde") or the exact
    constant-coefficient law (reference="analytic").  The error for (n,
    replica) is the max over snapshot times of the L1 distance between the
    empirical CDF and the reference CDF.
    """
    n_list = [int(n) for n in n_list]
    if sorted(n_list) != n_list:
        raise ValueError("n_list must be increasing")
    snapshot_times = [float(t) for t in snapshot_times]
    if reference == "analytic":
        consts = tuple(_require_constant(e, nm) for e, nm in
                       ((cs.b, "b"), (cs.sigma, "sigma"), (cs.gamma, "gamma")))
    elif reference != "spde":
        raise ValueError(f"unknown reference {reference!r}")

    def one_replica(r: int):
        seed_r = replica_seed(seed, r)
        W = sample_path(seed_r, STREAM_COMMON, T, steps)
        if reference == "spde":
            u0 = GridFunction(
                solver_config.x_min, solver_config.x_max, init.cdf(solver_config.centers())
            )
            sol = solve(u0, cs, W, solver_config, snapshot_times=snapshot_times)
            refs = {t: sol.snapshot_at(t) for t in snapshot_times}
        else:
            b0, s0, g0 = consts
            refs = {
                t: analytic_constant_solution(init, b0, s0, g0, t, W.value_at(t), solver_config)
                for t in snapshot_times
            }
        errors = []
        for n in n_list:
            noise = make_noise_bundle(seed_r, n, T, steps, common=W)
            traj = simulate(init, cs, T, steps, noise, snapshot_times=snapshot_times)
            err = max(
                l1_cdf_distance(refs[t], empirical_cdf(traj.state_at(t).positions))
                for t in snapshot_times
            )
            errors.append(err)
        return errors

    per_replica = _map_replicas(one_replica, replicas, threads)
    rows = []
    for j, n in enumerate(n_list):
        for r in range(replicas):
            rows.append((n, r, per_replica[r][j]))
    means = {n: float(np.mean([per_replica[r][j] for r in range(replicas)]))
             for j, n in enumerate(n_list)}
    stderrs = {n: float(np.std([per_replica[r][j] for r in range(replicas)], ddof=1)
                        / np.sqrt(replicas)) if replicas > 1 else 0.0
               for j, n in enumerate(n_list)}
    ratios = [means[a] / means[b] for a, b in zip(n_list[:-1], n_list[1:])]
    return ExperimentReport(
        kind="converge",
        params={"n_list": n_list, "replicas": replicas, "T": T, "steps": steps,
                "snapshot_times": snapshot_times, "reference": reference},
        columns=("n", "replica", "error"),
        rows=tuple(rows),
        provenance={"seed": seed, "replica_seeds": [replica_seed(seed, r) for r in range(replicas)]},
        summary={"mean_error": means, "stderr": stderrs, "adjacent_ratios": ratios},
    )


# --- martingale statistic -------------------------------------------------

class PhiConst:
    """phi(v) = c: the compensated process is identically zero."""

    k = 1
    phi_id = "const"
    grad_bound = 0.0
    hess_bound = 0.0

    def __init__(self, c: float = 1.0):
        self.c = c

    def value(self, v):
        return self.c

    def grad(self, v):
        return np.zeros(1)

    def hess(self, v):
        return np.zeros((1, 1))


class PhiLinear:
    """phi(v) = v_1."""

    k = 1
    phi_id = "linear"
    grad_bound = 1.0
    hess_bound = 0.0

    def value(self, v):
        return float(v[0])

    def grad(self, v):
        return np.array([1.0])

    def hess(self, v):
        return np.zeros((1, 1))


class PhiSquare:
    """phi(v) = v_1^2 (bounded on the reachable box |v_1| <= sup|f~|)."""

    k = 1
    phi_id = "square"

    def __init__(self, v_bound: float = 1.0):
        self.grad_bound = 2.0 * v_bound
        self.hess_bound = 2.0

    def value(self, v):
        return float(v[0] ** 2)

    def grad(self, v):
        return np.array([2.0 * v[0]])

    def hess(self, v):
        return np.array([[2.0]])


class PhiProduct:
    """phi(v) = v_1 v_2."""

    k = 2
    phi_id = "product"

    def __init__(self, v_bound: float = 1.0):
        self.grad_bound = 2.0 * v_bound
        self.hess_bound = 2.0

    def value(self, v):
        return float(v[0] * v[1])

    def grad(self, v):
        return np.array([v[1], v[0]])

    def hess(self, v):
        return np.array([[0.0, 1.0], [1.0, 0.0]])


class PhiTanh:
    """phi(v) = tanh(c v_1), smooth and globally bounded."""

    k = 1
    phi_id = "tanh"

    def __init__(self, c: float = 2.0):
        self.c = c
        self.grad_bound = c
        self.hess_bound = c * c * 4.0 / (3.0 * np.sqrt(3.0))  # sup |tanh''|

    def value(self, v):
        return float(np.tanh(self.c * v[0]))

    def grad(self, v):
        return np.array([self.c / np.cosh(self.c * v[0]) ** 2])

    def hess(self, v):
        th = np.tanh(self.c * v[0])
        return np.array([[-2.0 * self.c**2 * th / np.cosh(self.c * v[0]) ** 2]])


class PsiConst:
    psi_id = "const"

    def __call__(self, v_s, w_s):
        return 1.0


class PsiTanhPairing:
    """Bounded function of the pairing <F_s, f_1>."""

    psi_id = "tanh_pairing"

    def __init__(self, c: float = 3.0):
        self.c = c

    def __call__(self, v_s, w_s):
        return float(np.tanh(self.c * v_s[0]))


class PsiCosNoise:
    """Bounded function of the common noise at time s."""

    psi_id = "cos_noise"

    def __call__(self, v_s, w_s):
        return float(np.cos(w_s))


class PsiMixed:
    psi_id = "mixed"

    def __call__(self, v_s, w_s):
        return float(np.tanh(2.0 * v_s[0]) * np.cos(w_s))


def _sup_abs(expr, grid) -> float:
    vals = np.asarray(expr(grid), dtype=np.float64)
    return float(np.max(np.abs(vals))) if vals.ndim else abs(float(vals))


def bias_allowance(cs: CoefficientSet, f_list, phi, s: float, t: float) -> float:
    """Finite-n bias budget C for the martingale statistic (the acceptance
    allowance is C/n).  It covers the idiosyncratic Ito term
    (1/2n) sum_ij d_ij phi <nu, f_i f_j sigma^2> plus the rank-sum versus
    antiderivative discrepancies, all bounded through the exact symbolic
    derivatives of the coefficients; a factor 2 of headroom is included."""
    grid = np.linspace(0.0, 1.0, 4001)
    sup_sigma = _sup_abs(cs.sigma, grid)
    sup_gamma = _sup_abs(cs.gamma, grid)
    lip_b = _sup_abs(cs.b_prime, grid)
    lip_gamma = _sup_abs(cs.gamma_prime, grid)
    sigma_prime = cs.sigma.derivative()
    lip_s2g2 = 2.0 * (sup_sigma * _sup_abs(sigma_prime, grid) + sup_gamma * lip_gamma)

    f_sup, f1_l1, f2_l1 = 0.0, 0.0, 0.0
    for f in f_list:
        lo, hi = f.support()
        xs = np.linspace(lo, hi, 8193)
        f_sup = max(f_sup, float(np.max(np.abs(f(xs)))))
        f1_l1 = max(f1_l1, float(np.trapezoid(np.abs(f.d1(xs)), xs)))
        f2_l1 = max(f2_l1, float(np.trapezoid(np.abs(f.d2(xs)), xs)))

    k = phi.k
    dt_window = t - s
    ito_term = 0.5 * dt_window * phi.hess_bound * k * k * f_sup**2 * sup_sigma**2
    rank_drift = dt_window * phi.grad_bound * k * (
        f1_l1 * 0.5 * lip_b + 0.5 * f2_l1 * 0.5 * lip_s2g2
    )
    rank_qv = dt_window * phi.hess_bound * k * k * (
        f_sup * sup_gamma * f1_l1 * 0.5 * lip_gamma
    )
    return 2.0 * (ito_term + rank_drift + rank_qv)


def default_martingale_suite(f_center: float = 0.0, f_radius: float = 2.5):
    """Six (f, phi, psi) triples exercising linear and nonlinear phi with
    each built-in psi family."""
    f1 = Bump1D(f_center, f_radius)
    f2 = Bump1D(f_center + 0.5 * f_radius, f_radius)
    return [
        ([f1], PhiLinear(), PsiConst()),
        ([f1], PhiTanh(2.0), PsiConst()),
        ([f1, f2], PhiProduct(v_bound=1.0), PsiConst()),
        ([f1], PhiLinear(), PsiTanhPairing(3.0)),
        ([f1], PhiSquare(v_bound=1.0), PsiCosNoise()),
        ([f2], PhiTanh(2.0), PsiMixed()),
    ]


def martingale_statistic(
    cs: CoefficientSet,
    init: InitialDistribution,
    f_list,
    phi,
    psi,
    s: float,
    t: float,
    n: int,
    replicas: int,
    steps: int,
    seed: int,
    threads: int = 1,
) -> ExperimentReport:
    """Monte Carlo estimate of E[(M_t - M_s) Psi] where M compensates
    phi(<F_nu, f>) by the limit generator:

        M_t = phi(<F_t, f>) - phi(<F_0, f>)
              - sum_i int_0^t d_i phi (<B(F_r), f_i'> + <(Sigma+Gamma)(F_r), f_i''>) dr
              - 1/2 sum_ij int_0^t d_ij phi <G(F_r), f_i'> <G(F_r), f_j'> dr,

    with F_r the empirical CDF, the pairings evaluated exactly through the
    step structure of F_r, and the dr-integrals by trapezoid on the
    simulation grid.
    """
    if not 0.0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    k = len(f_list)
    if k != phi.k:
        raise ValueError(f"phi expects {phi.k} test functions, got {k}")
    T = t
    grid = np.linspace(0.0, T, steps + 1) if steps > 0 else np.array([0.0])
    s_idx = int(np.argmin(np.abs(grid - s)))
    if abs(grid[s_idx] - s) > 1e-9:
        raise ValueError("s must lie on the simulation grid")

    # pairing of g(F) against f' for a step CDF F with sorted atoms x_(l):
    # <g(F), f'> = -sum_l (g(l/n) - g((l-1)/n)) f(x_(l))
    levels = np.arange(n + 1) / n
    dB_lv = np.diff(cs.eval_transform("B", levels))
    dD_lv = np.diff(cs.eval_transform("Sigma", levels) + cs.eval_transform("Gamma", levels))
    dG_lv = np.diff(cs.eval_transform("G", levels))

    def one_replica(r: int) -> float:
        seed_r = replica_seed(seed, r)
        noise = make_noise_bundle(seed_r, n, T, steps)
        traj = simulate(init, cs, T, steps, noise)
        n_times = len(traj.states)
        v = np.empty((n_times, k))
        drift = np.empty(n_times)
        quad = np.empty(n_times)
        for m, state in enumerate(traj.states):
            srt = state.sorted_positions()
            fvals = np.stack([f(srt) for f in f_list])        # (k, n)
            f1vals = np.stack([f.d1(srt) for f in f_list])
            tails = np.stack([f.tail_integral(srt) for f in f_list])
            v[m] = tails.mean(axis=1)
            pair_b = -fvals @ dB_lv            # <B(F), f_i'>
            pair_d = -f1vals @ dD_lv           # <(Sigma+Gamma)(F), f_i''>
            pair_g = -fvals @ dG_lv            # <G(F), f_i'>
            gr = phi.grad(v[m])
            he = phi.hess(v[m])
            drift[m] = float(gr @ (pair_b + pair_d))
            quad[m] = 0.5 * float(pair_g @ he @ pair_g)
        if steps == 0:
            return 0.0
        integrand = drift + quad
        # M_t - M_s: the phi(v_0) terms cancel
        m_diff = (
            phi.value(v[-1]) - phi.value(v[s_idx])
            - float(np.trapezoid(integrand[s_idx:], grid[s_idx:]))
        )
        w_s = noise.common.values[s_idx]
        return m_diff * psi(v[s_idx], float(w_s))

    samples = np.asarray(_map_replicas(one_replica, replicas, threads))
    estimate = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else 0.0
    z = abs(estimate) / stderr if stderr > 0 else 0.0
    f_id = "+".join(f"bump({f.center:g},{f.radius:g})" for f in f_list)
    return ExperimentReport(
        kind="martingale",
        params={"s": s, "t": t, "n": n, "replicas": replicas, "steps": steps},
        columns=("f_id", "phi_id", "psi_id", "estimate", "stderr", "z_score"),
        rows=((f_id, phi.phi_id, psi.psi_id, estimate, stderr, z),),
        provenance={"seed": seed},
        summary={"estimate": estimate, "stderr": stderr, "z": z,
                 "allowance_C": bias_allowance(cs, f_list, phi, s, t)},
    )


def stability_experiment(
    cs: CoefficientSet,
    u0: GridFunction,
    base_path: BrownianPath,
    epsilons,
    config: SolverConfig,
    snapshot_times=None,
) -> ExperimentReport:
    """Pathwise stability: solve with the base path and with base + eps t/T
    (a ramp keeps the sup-distance between signals exactly eps), and record
    D(eps) = max over snapshots of the L1 distance between the solutions.
    The implied constant is D / (sqrt(eps) + eps)."""
    epsilons = [float(e) for e in epsilons]
    if any(e < 0 for e in epsilons) or sorted(epsilons) != epsilons:
        raise ValueError("epsilons must be nonnegative and increasing")
    T = base_path.T
    if snapshot_times is None:
        snapshot_times = [T]
    base_sol = solve(u0, cs, base_path, config, snapshot_times=snapshot_times)

    rows = []
    for eps in epsilons:
        pert = base_path.shifted(lambda tt, e=eps: e * tt / T)
        sol = solve(u0, cs, pert, config, snapshot_times=snapshot_times)
        D = max(
            w1(a, b) for a, b in zip(base_sol.snapshots, sol.snapshots)
        )
        implied = D / (np.sqrt(eps) + eps) if eps > 0 else float("nan")
        rows.append((eps, D, implied))
    implied_cs = [r[2] for r in rows if np.isfinite(r[2])]
    return ExperimentReport(
        kind="stability",
        params={"epsilons": epsilons, "T": T, "snapshot_times": list(map(float, snapshot_times))},
        columns=("epsilon", "D", "implied_C"),
        rows=tuple(rows),
        provenance={"seed": base_path.seed, "stream_id": base_path.stream_id},
        summary={"implied_C_spread": (max(implied_cs) / min(implied_cs))
                 if implied_cs and min(implied_cs) > 0 else float("nan")},
    )
