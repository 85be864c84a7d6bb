"""Ensemble benchmark harness: optimization runs, convergence detection,
hyperparameter search, trimmed-mean statistics, performance profiles,
win-rate curves and CSV persistence.

A run iterates energy -> QGT blocks -> (noise) -> natural-gradient step,
checking the relative error |E - E_exact| / |E_exact| every iteration; it
converges when the error stays below tol for `window` consecutive checks,
and the reported iteration count is the first iteration of that streak.
Crossing times for the decade thresholds 1e-2 .. 1e-12 are recorded with
the same sustained-streak rule so profiles and win rates at any of those
thresholds can be recomputed from the run table alone.

All randomness is keyed by SplitRng paths under the ensemble master seed,
so results are independent of worker scheduling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import EmptyAfterTrim, NoSolvedInstances
from .numkit import SplitRng
from .optim import QOptConfig
from .qgt import noise_betas
from .qsim import CircuitSpec, GappedHamiltonian, cz_chain_signs, initial_state, sample_circuit, sample_hamiltonian, sample_params

__all__ = [
    "DEFAULT_THRESHOLDS",
    "NoiseConfig",
    "RunLimits",
    "EnsembleSpec",
    "RunRecord",
    "ProfileCurve",
    "SearchSpace",
    "run_one",
    "run_ensemble",
    "trimmed_mean",
    "dolan_more",
    "win_rate",
    "tune",
    "write_runs_csv",
    "read_runs_csv",
]

DEFAULT_THRESHOLDS = tuple(10.0**-k for k in range(2, 13))


@dataclass
class NoiseConfig:
    varsigma: float = 0.0
    epsilon: float = 1e-6
    fixed: bool = False  # freeze the iteration-1 draw for the whole run


@dataclass
class RunLimits:
    max_iters: int = 12000
    tol: float = 1e-11
    window: int = 400


@dataclass
class EnsembleSpec:
    """Deterministic family of (circuit, initial parameters, Hamiltonian)."""

    n_circuits: int
    n_qubits: int = 6
    n_layers: int = 5
    gap: float = 1.5
    master_seed: int = 0

    def instance(self, i: int):
        root = SplitRng(self.master_seed, ("ensemble", i))
        spec = sample_circuit(root.split("circuit").seed64, self.n_qubits, self.n_layers)
        theta0 = sample_params(root.split("params").seed64, self.n_qubits, self.n_layers)
        h = sample_hamiltonian(root.split("hamiltonian").seed64, self.n_qubits, self.gap)
        return spec, theta0, h

    def noise_rng(self, i: int, tag: tuple) -> SplitRng:
        return SplitRng(self.master_seed, ("ensemble", i, "noise") + tuple(tag))

    def to_json(self) -> dict:
        return {
            "n_circuits": self.n_circuits,
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "gap": self.gap,
            "master_seed": self.master_seed,
            "circuits": [self.instance(i)[0].to_json() for i in range(self.n_circuits)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EnsembleSpec":
        return cls(d["n_circuits"], d["n_qubits"], d["n_layers"], d["gap"], d["master_seed"])


@dataclass
class RunRecord:
    """One optimization trajectory, reduced to summary statistics."""

    circuit_index: int
    method: str
    eta: float
    xi: float
    gamma: float
    noise: float
    iterations: float  # first iteration of the qualifying streak, or inf
    converged: bool
    final_rel_error: float
    e_exact: float
    wall_time_s: float
    seed: int
    reason: str = ""
    threshold_iters: dict = field(default_factory=dict)
    energy_trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def t_at(self, threshold: float) -> float:
        for key, val in self.threshold_iters.items():
            if math.isclose(key, threshold, rel_tol=1e-9):
                return val
        raise KeyError(f"no recorded crossing time for threshold {threshold:g}")


def run_one(spec: CircuitSpec, h: GappedHamiltonian, theta0: np.ndarray, cfg: QOptConfig,
            noise: NoiseConfig = NoiseConfig(), limits: RunLimits = RunLimits(),
            noise_rng: SplitRng | None = None, circuit_index: int = 0, seed: int = 0) -> RunRecord:
    """Run one optimization to convergence or max_iters.

    Solver failures and non-finite steps mark the run unconverged with a
    reason code instead of raising.
    """
    method_code = _kernels.METHOD_CODES[cfg.method]
    n, n_layers = spec.n_qubits, spec.n_layers
    signs = cz_chain_signs(n)
    psi0 = initial_state(n)
    theta = np.asarray(theta0, dtype=np.float64).copy()
    e_exact = h.e0
    abs_e = abs(e_exact)
    thresholds = np.array(DEFAULT_THRESHOLDS)
    thr_streak = np.zeros(len(thresholds), dtype=np.int64)
    thr_first = np.full(len(thresholds), -1, dtype=np.int64)
    energies = np.empty(limits.max_iters)
    betas = np.zeros((n_layers, n, n))
    if noise.varsigma > 0 and noise_rng is None:
        noise_rng = SplitRng(seed, ("noise",))

    start = time.perf_counter()
    streak = 0
    iterations = math.inf
    converged = False
    reason = "max-iters"
    rel = math.inf
    n_done = 0
    for it in range(1, limits.max_iters + 1):
        if noise.varsigma > 0 and (not noise.fixed or it == 1):
            betas = noise_betas(noise_rng, n_layers, n)
        e_val, dtheta, status = _kernels.vqe_iterate(
            spec.axes, theta, h.h2, signs, psi0, betas,
            noise.varsigma, noise.epsilon, method_code,
            cfg.eta, cfg.xi, cfg.gamma, cfg.damping, cfg.sigma_literal,
        )
        energies[it - 1] = e_val
        n_done = it
        rel = abs(e_val - e_exact) / abs_e
        below = rel < thresholds
        thr_streak = np.where(below, thr_streak + 1, 0)
        hit = (thr_streak == limits.window) & (thr_first < 0)
        if hit.any():
            thr_first[hit] = it - limits.window + 1
        if rel < limits.tol:
            streak += 1
        else:
            streak = 0
        if streak == limits.window:
            converged = True
            iterations = it - limits.window + 1
            reason = ""
            break
        if status != 0:
            reason = "not-positive-definite"
            break
        if not np.all(np.isfinite(dtheta)):
            reason = "non-finite"
            break
        theta += dtheta
    wall = time.perf_counter() - start
    stride = max(1, n_done // 200)
    trace = energies[:n_done:stride].copy()
    thr_iters = {
        float(t): (float(f) if f > 0 else math.inf)
        for t, f in zip(thresholds, thr_first)
    }
    return RunRecord(
        circuit_index=circuit_index, method=cfg.method, eta=cfg.eta, xi=cfg.xi,
        gamma=cfg.gamma, noise=noise.varsigma, iterations=iterations,
        converged=converged, final_rel_error=float(rel), e_exact=float(e_exact),
        wall_time_s=wall, seed=seed, reason=reason, threshold_iters=thr_iters,
        energy_trace=trace,
    )


# ---------------------------------------------------------------------------
# parallel ensemble execution

def _run_task(payload) -> RunRecord:
    ens_args, i, cfg_args, noise_args, limits_args, noise_tag = payload
    ens = EnsembleSpec(*ens_args)
    spec, theta0, h = ens.instance(i)
    cfg = QOptConfig(*cfg_args)
    noise = NoiseConfig(*noise_args)
    limits = RunLimits(*limits_args)
    rng = ens.noise_rng(i, noise_tag) if noise.varsigma > 0 else None
    return run_one(spec, h, theta0, cfg, noise, limits, rng,
                   circuit_index=i, seed=SplitRng(ens.master_seed, ("ensemble", i)).seed64)


def _ens_args(ens: EnsembleSpec):
    return (ens.n_circuits, ens.n_qubits, ens.n_layers, ens.gap, ens.master_seed)


def _cfg_args(cfg: QOptConfig):
    return (cfg.method, cfg.eta, cfg.xi, cfg.gamma, cfg.damping, cfg.sigma_literal)


def _execute(payloads, n_workers: int):
    if n_workers <= 1 or len(payloads) <= 1:
        return [_run_task(p) for p in payloads]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(n_workers) as pool:
        return pool.map(_run_task, payloads, chunksize=1)


def run_ensemble(ens: EnsembleSpec, cfg: QOptConfig, noise: NoiseConfig = NoiseConfig(),
                 limits: RunLimits = RunLimits(), n_workers: int = 1,
                 noise_tag_extra: tuple = ()) -> list:
    """Run one method over every circuit of the ensemble."""
    tag = (cfg.method,) + noise_tag_extra
    payloads = [
        (_ens_args(ens), i, _cfg_args(cfg), (noise.varsigma, noise.epsilon, noise.fixed),
         (limits.max_iters, limits.tol, limits.window), tag)
        for i in range(ens.n_circuits)
    ]
    return _execute(payloads, n_workers)


# ---------------------------------------------------------------------------
# statistics

def trimmed_mean(xs, proportion: float = 0.2, per_tail: bool = False) -> float:
    """Mean after dropping floor(proportion/2 * n) from each sorted tail.

    The default reads "20% trimmed" as total (10% per tail); per_tail=True
    switches to the each-tail reading.
    """
    xs = np.sort(np.asarray(xs, dtype=np.float64))
    n = xs.size
    cut = proportion if per_tail else proportion / 2.0
    k = int(math.floor(cut * n))
    if n - 2 * k <= 0:
        raise EmptyAfterTrim(f"trimming {k} per tail empties a sample of {n}")
    return float(xs[k : n - k].mean())


@dataclass
class ProfileCurve:
    """Nondecreasing fraction-of-instances-solved-within-tau curve."""

    method: str
    taus: np.ndarray
    fractions: np.ndarray

    def value(self, tau: float) -> float:
        idx = np.searchsorted(self.taus, tau, side="right") - 1
        return float(self.fractions[idx]) if idx >= 0 else 0.0


def _times_by_circuit(records, threshold):
    by_circuit: dict = {}
    for r in records:
        by_circuit.setdefault(r.circuit_index, {})[r.method] = r.t_at(threshold)
    return by_circuit


def dolan_more(records, threshold: float = 1e-8):
    """Performance profiles over circuits solved by at least one method.

    Per circuit, t is the sustained crossing time at `threshold`;
    unsolved-by-method gives ratio +inf; rho_m(tau) is the fraction of
    included circuits with t_m / t_best <= tau.
    """
    methods = sorted({r.method for r in records})
    by_circuit = _times_by_circuit(records, threshold)
    ratios = {m: [] for m in methods}
    n_included = 0
    for times in by_circuit.values():
        finite = [t for t in times.values() if math.isfinite(t)]
        if not finite:
            continue
        n_included += 1
        best = min(finite)
        for m in methods:
            t = times.get(m, math.inf)
            ratios[m].append(t / best if math.isfinite(t) else math.inf)
    if n_included == 0:
        raise NoSolvedInstances(f"no circuit solved at threshold {threshold:g}")
    all_taus = sorted({1.0} | {x for rs in ratios.values() for x in rs if math.isfinite(x)})
    taus = np.array(all_taus)
    curves = {}
    for m in methods:
        rs = np.array(ratios[m])
        fractions = np.array([(rs <= t).mean() for t in taus])
        curves[m] = ProfileCurve(m, taus, fractions)
    return curves


def win_rate(records, thresholds=DEFAULT_THRESHOLDS):
    """Fraction of circuits on which each method is strictly fastest.

    Exact ties split the win equally; at each threshold only circuits
    solved by at least one method count. Returns {method: fractions array};
    thresholds where no circuit is solved give NaN.
    """
    methods = sorted({r.method for r in records})
    out = {m: np.full(len(thresholds), np.nan) for m in methods}
    any_solved = False
    for k, thr in enumerate(thresholds):
        by_circuit = _times_by_circuit(records, thr)
        wins = {m: 0.0 for m in methods}
        n_included = 0
        for times in by_circuit.values():
            finite = {m: t for m, t in times.items() if math.isfinite(t)}
            if not finite:
                continue
            n_included += 1
            best = min(finite.values())
            tied = [m for m, t in finite.items() if t == best]
            for m in tied:
                wins[m] += 1.0 / len(tied)
        if n_included:
            any_solved = True
            for m in methods:
                out[m][k] = wins[m] / n_included
    if not any_solved:
        raise NoSolvedInstances("no circuit solved at any requested threshold")
    return out


# ---------------------------------------------------------------------------
# hyperparameter search

@dataclass
class SearchSpace:
    eta_range: tuple = (1e-3, 1e-1)  # log-uniform
    xi_range: tuple = (1e-3, 1e-1)  # log-uniform
    gamma_range: tuple = (0.0, 4.0)  # uniform


def _trial_params(method: str, space: SearchSpace, rng: SplitRng):
    eta = float(rng.loguniform(*space.eta_range))
    xi = float(rng.loguniform(*space.xi_range)) if method != "qng" else 0.0
    gamma = float(rng.uniform(*space.gamma_range)) if method in ("cla2-qng", "cla3-qng") else 0.0
    return eta, xi, gamma


def tune(method: str, space: SearchSpace, n_trials: int, ens: EnsembleSpec,
         seed: int = 0, noise: NoiseConfig = NoiseConfig(), limits: RunLimits = RunLimits(),
         damping: float = 1e-8, trim_proportion: float = 0.2, n_workers: int = 1):
    """Seeded random search; objective = trimmed mean of iterations over the
    ensemble with unconverged runs contributing max_iters.

    Returns (best_trial, trials) where each trial dict carries the sampled
    hyperparameters, the objective, and the per-circuit iteration counts.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    trials = []
    payloads = []
    for k in range(n_trials):
        eta, xi, gamma = _trial_params(method, space, SplitRng(seed, ("tune", method, k)))
        trials.append({"trial": k, "method": method, "eta": eta, "xi": xi, "gamma": gamma})
        cfg = QOptConfig(method, eta, xi, gamma, damping)
        for i in range(ens.n_circuits):
            payloads.append(
                (_ens_args(ens), i, _cfg_args(cfg),
                 (noise.varsigma, noise.epsilon, noise.fixed),
                 (limits.max_iters, limits.tol, limits.window),
                 (method, "tune", k))
            )
    records = _execute(payloads, n_workers)
    for k, trial in enumerate(trials):
        recs = records[k * ens.n_circuits : (k + 1) * ens.n_circuits]
        iters = [r.iterations if r.converged else float(limits.max_iters) for r in recs]
        trial["iterations"] = iters
        trial["n_converged"] = sum(r.converged for r in recs)
        trial["objective"] = trimmed_mean(iters, trim_proportion)
    best = min(trials, key=lambda t: t["objective"])
    return best, trials


# ---------------------------------------------------------------------------
# persistence

def _fmt(x: float) -> str:
    return f"{x:.17g}"

_THR_COLUMNS = [f"t_thr_1e-{k:02d}" for k in range(2, 13)]

_CSV_HEADER = (
    ["circuit_index", "method", "eta", "xi", "gamma", "noise", "iterations",
     "converged", "final_rel_error", "wall_time_s", "seed", "reason"]
    + _THR_COLUMNS
)


def write_runs_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(_CSV_HEADER) + "\n")
        for r in records:
            thr_vals = [
                "" if math.isinf(r.threshold_iters[t]) else str(int(r.threshold_iters[t]))
                for t in DEFAULT_THRESHOLDS
            ]
            row = [
                str(r.circuit_index), r.method, _fmt(r.eta), _fmt(r.xi), _fmt(r.gamma),
                _fmt(r.noise), "inf" if math.isinf(r.iterations) else str(int(r.iterations)),
                str(r.converged).lower(), _fmt(r.final_rel_error), _fmt(r.wall_time_s),
                str(r.seed), r.reason,
            ] + thr_vals
            fh.write(",".join(row) + "\n")


def read_runs_csv(path) -> list:
    records = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        idx = {name: k for k, name in enumerate(header)}
        for line in fh:
            parts = line.rstrip("\n").split(",")
            thr = {}
            for t, col in zip(DEFAULT_THRESHOLDS, _THR_COLUMNS):
                val = parts[idx[col]] if col in idx else ""
                thr[float(t)] = float(val) if val else math.inf
            records.append(RunRecord(
                circuit_index=int(parts[idx["circuit_index"]]),
                method=parts[idx["method"]],
                eta=float(parts[idx["eta"]]),
                xi=float(parts[idx["xi"]]),
                gamma=float(parts[idx["gamma"]]),
                noise=float(parts[idx["noise"]]),
                iterations=float(parts[idx["iterations"]]),
                converged=parts[idx["converged"]] == "true",
                final_rel_error=float(parts[idx["final_rel_error"]]),
                e_exact=-1.0,
                wall_time_s=float(parts[idx["wall_time_s"]]),
                seed=int(parts[idx["seed"]]),
                reason=parts[idx["reason"]] if "reason" in idx else "",
                threshold_iters=thr,
            ))
    return records
