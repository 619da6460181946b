"""DC-microgrid benchmark: DGU models, random networks, feasibility campaigns.

A trial is fully determined by ``(master_seed, trial)``: the network draw and
the open-loop experiment use two child streams of that seed sequence, so a
campaign replays bit-exactly (timings aside).
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .datagen import NoiseBound, SubsystemModel, collect_network_data, sample_noise
from .dissip import verify_trajectory_dissipation
from .errors import ConditioningError, DissipnetError, InvalidInputError, SolverError
from .network import (STABILITY_MARGIN, DiffusiveWeights, assemble_closed_loop,
                      diffusive_interconnection)
from .synth import FEASIBLE, SOLVER_ERROR, algorithm1_node, algorithm2_node

# Sampling time calibrated so that the baseline campaign sits where the
# per-sample noise bound starts to matter (see README).
DEFAULT_TS = 2.3e-3

# (nominal, half-width) of the uniform parameter draws
PARAM_RANGES = {
    "R": (0.2, 0.1),
    "L": (5e-4, 5e-5),
    "C": (1e-2, 1e-3),
    "Y": (0.2, 0.02),
}
LINE_RESISTANCE = (4.0, 0.4)

ALGORITHMS = ("alg1", "alg2")
CSV_COLUMNS = ("trial", "seed", "alg", "feasible", "rho", "mean_node_ms")
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class DguParams:
    R: float
    L: float
    C: float
    Y: float
    Ts: float = DEFAULT_TS

    def __post_init__(self):
        for name in ("R", "L", "C", "Y", "Ts"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"DGU parameter {name} must be positive, got {value}")


def dgu_model(p, euler_a22=False):
    """Discrete-time DGU with state ``[V, I]``, input ``V_in`` and line current ``I_G``.

    ``A[1, 1]`` is ``-Ts R / L`` by default and ``1 - Ts R / L`` with ``euler_a22``.
    """
    ts = p.Ts
    a22 = (1.0 if euler_a22 else 0.0) - ts * p.R / p.L
    A = np.array([[1.0 - ts * p.Y / p.C, ts / p.C],
                  [-ts / p.L, a22]])
    return SubsystemModel(A, [[0.0], [ts / p.L]], [[ts / p.C], [0.0]],
                          [[1.0, 0.0]], [[0.0]], [[0.0]])


@dataclass
class CampaignConfig:
    k: int = 50
    extra_edges: int = 20
    N: int = 50
    N_tilde: int = 50
    eps_l: float = 1e-3
    eps_g: float = 1e-3
    alpha_param: float = 1.0
    trials: int = 100
    master_seed: int = 0
    algorithm: str = "both"
    Ts: float = DEFAULT_TS
    euler_a22: bool = False
    hold: int = 5
    amplitude: float = 1.0

    def __post_init__(self):
        for name in ("k", "extra_edges", "N", "N_tilde", "trials", "master_seed", "hold"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise InvalidInputError(f"{name} must be an integer, got {value!r}")
            setattr(self, name, int(value))
        if self.k < 3:
            raise InvalidInputError("a ring needs k >= 3")
        if self.trials < 1 or self.N < 1 or self.N_tilde < 1 or self.hold < 1:
            raise InvalidInputError("trials, N, N_tilde and hold must be positive")
        if self.extra_edges < 0:
            raise InvalidInputError("extra_edges must be nonnegative")
        if self.eps_l < 0 or self.eps_g < 0 or self.Ts <= 0 or self.amplitude < 0:
            raise InvalidInputError("noise levels, Ts and amplitude must be nonnegative")
        if self.algorithm not in ALGORITHMS + ("both",):
            raise InvalidInputError(f"algorithm must be alg1, alg2 or both, got {self.algorithm!r}")
        self.euler_a22 = bool(self.euler_a22)

    @property
    def algorithms(self):
        return ALGORITHMS if self.algorithm == "both" else (self.algorithm,)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown campaign keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return CampaignConfig.from_dict({**self.to_dict(), **changes})


def trial_seed(cfg, trial):
    """32-bit seed of one trial, derived from ``(master_seed, trial)``."""
    return int(np.random.SeedSequence([cfg.master_seed, trial]).generate_state(1)[0])


def _streams(cfg, trial):
    net, data = np.random.SeedSequence(trial_seed(cfg, trial)).spawn(2)
    return net, data


def ring_chords(k):
    """All node pairs that are neither ring edges nor self-loops."""
    ring = {(i, (i + 1) % k) if i < (i + 1) % k else ((i + 1) % k, i) for i in range(k)}
    return [(i, j) for i in range(k) for j in range(i + 1, k) if (i, j) not in ring]


def generate_microgrid(cfg, trial):
    """Draw DGU models and a ring-plus-chords line network for one trial.

    Returns ``(models, weights, topology)``.
    """
    k = cfg.k
    if cfg.extra_edges > k * (k - 3) // 2:
        raise InvalidInputError(
            f"{cfg.extra_edges} extra edges requested, a {k}-ring admits {k * (k - 3) // 2}")
    rng = np.random.default_rng(_streams(cfg, trial)[0])
    draws = {name: rng.uniform(mid - half, mid + half, size=k)
             for name, (mid, half) in PARAM_RANGES.items()}
    models = [dgu_model(DguParams(draws["R"][i], draws["L"][i], draws["C"][i], draws["Y"][i],
                                  cfg.Ts), cfg.euler_a22) for i in range(k)]
    edges = sorted({tuple(sorted((i, (i + 1) % k))) for i in range(k)})
    chords = ring_chords(k)
    picks = rng.choice(len(chords), size=cfg.extra_edges, replace=False)
    edges = sorted(edges + [chords[c] for c in picks])
    mid, half = LINE_RESISTANCE
    resistances = rng.uniform(mid - half, mid + half, size=len(edges))
    a = np.zeros((k, k))
    for (i, j), r in zip(edges, resistances):
        a[i, j] = a[j, i] = 1.0 / r
    weights = DiffusiveWeights(a)
    return models, weights, weights.topology()


def instance_data(cfg, trial):
    """Network draw plus the shared open-loop experiment of one trial."""
    models, weights, topo = generate_microgrid(cfg, trial)
    M = diffusive_interconnection(weights, topo)
    data = collect_network_data(models, M, cfg.N, cfg.N_tilde, cfg.eps_l, cfg.eps_g,
                                seed=_streams(cfg, trial)[1], hold=cfg.hold,
                                amplitude=cfg.amplitude)
    return models, weights, M, data


def run_node(alg, local, inter, cfg):
    """Run one algorithm at one node; errors become an in-band status."""
    phi = NoiseBound.per_sample_ball(local.X.shape[0] + local.Y.shape[0], local.N, cfg.eps_l)
    psi = NoiseBound.per_sample_ball(inter.V_tilde.shape[0], inter.N_tilde, cfg.eps_g)
    t0 = time.perf_counter()
    try:
        if alg == "alg1":
            res = algorithm1_node(local, inter, phi, psi)
        else:
            res = algorithm2_node(local, inter, phi, psi, cfg.alpha_param)
        status = res.status
    except DissipnetError as exc:
        res = None
        solver_side = isinstance(exc, (SolverError, ConditioningError))
        status = SOLVER_ERROR if solver_side else f"error:{type(exc).__name__}"
    return res, status, time.perf_counter() - t0


@dataclass
class TrialRecord:
    trial: int
    seed: int
    alg: str
    feasible: bool
    rho: float
    mean_node_ms: float
    node_status: list
    dissipation_ok: bool = True
    results: list = field(default=None, repr=False)

    def csv_row(self):
        rho = "" if self.rho is None else repr(self.rho)
        return [self.trial, self.seed, self.alg, int(self.feasible), rho,
                f"{self.mean_node_ms:.4f}"]


@dataclass
class CampaignReport:
    config: CampaignConfig
    records: list
    paths: dict = field(default_factory=dict)

    def _of(self, alg):
        return [r for r in self.records if r.alg == alg]

    def feasibility(self, alg):
        """Percentage of feasible instances for ``alg``."""
        recs = self._of(alg)
        return 100.0 * sum(r.feasible for r in recs) / len(recs) if recs else float("nan")

    def mean_node_ms(self, alg):
        recs = self._of(alg)
        return float(np.mean([r.mean_node_ms for r in recs])) if recs else float("nan")

    def rhos(self, alg):
        return [r.rho for r in self._of(alg) if r.feasible]

    def summary(self):
        out = {}
        for alg in self.config.algorithms:
            counts = {}
            for r in self._of(alg):
                for s in r.node_status:
                    counts[s] = counts.get(s, 0) + 1
            out[alg] = {"feasible_pct": self.feasibility(alg),
                        "mean_node_ms": self.mean_node_ms(alg),
                        "max_rho": max(self.rhos(alg), default=None),
                        "node_status": counts}
        return out

    def to_dict(self):
        return {"config": self.config.to_dict(), "summary": self.summary(),
                "paths": {k: str(v) for k, v in self.paths.items()}}


def _instance_record(alg, trial, seed, cfg, models, M, data, verify, keep):
    results, status, times = [], [], []
    for local, inter in data:
        res, st, dt = run_node(alg, local, inter, cfg)
        results.append(res)
        status.append(st if st != FEASIBLE or res.inertia_ok else "inertia-fail")
        times.append(dt)
    feasible = all(s == FEASIBLE for s in status)
    rho = None
    if feasible:
        _, rho = assemble_closed_loop(models, [r.K for r in results], M)
    dissipation_ok = True
    if verify:
        for model, res in zip(models, results):
            if res is not None and res.feasible and res.inertia_ok:
                dissipation_ok &= verify_trajectory_dissipation(
                    model.closed_loop(res.K), res.supply, res.storage, trials=10000, seed=trial)
    return TrialRecord(trial, seed, alg, feasible, rho, 1000.0 * float(np.mean(times)), status,
                       dissipation_ok, results if keep else None)


def run_campaign(cfg, out_dir=None, verify=True, keep_results=False, progress=None):
    """Run every trial of ``cfg``; write ``campaign.csv`` under ``out_dir`` if given.

    ``keep_results`` retains the per-node :class:`SynthesisResult` lists on the
    records. ``progress`` is called as ``progress(record)`` after each
    (trial, algorithm) pair.
    """
    records = []
    for trial in range(cfg.trials):
        seed = trial_seed(cfg, trial)
        models, _, M, data = instance_data(cfg, trial)
        for alg in cfg.algorithms:
            rec = _instance_record(alg, trial, seed, cfg, models, M, data, verify, keep_results)
            records.append(rec)
            if progress is not None:
                progress(rec)
    report = CampaignReport(cfg, records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.paths["csv"] = write_campaign_csv(report, out / "campaign.csv")
    return report


def write_campaign_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in report.records:
            writer.writerow(rec.csv_row())
    return Path(path)


def read_campaign_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def simulate_closed_loop(models, gains, M, x0, T, noise=None, seed=0):
    """Iterate the global closed loop for ``T`` steps; returns ``(T + 1) x n_total`` states.

    ``noise=None`` gives the nominal loop. ``noise=(eps_l, eps_g)`` injects
    per-sample ball noise on each subsystem's state/output and on every line.
    Iteration stops early (rows left as NaN) once the norm passes 1e150.
    """
    if len(models) != len(gains) or len(models) != M.topology.k:
        raise InvalidInputError("models, gains and topology must have k entries")
    a_cl, _ = assemble_closed_loop(models, gains, M)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != a_cl.shape[0]:
        raise InvalidInputError(f"x0 has {x0.shape[0]} entries, network has {a_cl.shape[0]}")
    if T < 0:
        raise InvalidInputError("T must be nonnegative")
    states = np.full((T + 1, x0.shape[0]), np.nan)
    states[0] = x0
    if noise is None:
        for t in range(T):
            states[t + 1] = a_cl @ states[t]
            if not np.linalg.norm(states[t + 1]) < 1e150:
                break
        return states
    eps_l, eps_g = noise
    rng = np.random.default_rng(seed)
    gains = [np.atleast_2d(K) for K in gains]
    n_off = np.concatenate([[0], np.cumsum([m.dims[0] for m in models])])
    p_off = M.topology.offsets
    d2 = np.zeros((p_off[-1], p_off[-1]))
    for i, m in enumerate(models):
        d2[p_off[i]:p_off[i + 1], p_off[i]:p_off[i + 1]] = m.D2
    loop = np.eye(p_off[-1]) - d2 @ M.M
    for t in range(T):
        x = states[t]
        w = [sample_noise(NoiseBound.per_sample_ball(m.dims[0] + m.dims[2], 1, eps_l),
                          seed=rng)[:, 0] for m in models]
        xi = sample_noise(NoiseBound.per_sample_ball(p_off[-1], 1, eps_g), seed=rng)[:, 0]
        # outputs first; the algebraic loop through D2 is solved exactly
        y_free = np.concatenate([
            (m.C + m.D1 @ K) @ x[n_off[i]:n_off[i + 1]] + w[i][m.dims[0]:]
            for i, (m, K) in enumerate(zip(models, gains))])
        y = np.linalg.solve(loop, y_free + d2 @ xi)
        v = M.M @ y + xi
        nxt = []
        for i, (m, K) in enumerate(zip(models, gains)):
            xi_loc = x[n_off[i]:n_off[i + 1]]
            nxt.append((m.A + m.B1 @ K) @ xi_loc + m.B2 @ v[p_off[i]:p_off[i + 1]]
                       + w[i][:m.dims[0]])
        states[t + 1] = np.concatenate(nxt)
        if not np.linalg.norm(states[t + 1]) < 1e150:
            break
    return states


def diverged(states, threshold=DIVERGENCE_NORM):
    norms = np.linalg.norm(np.nan_to_num(states, nan=np.inf), axis=1)
    return bool(np.any(norms > threshold))


def write_trajectory_csv(path, states, models):
    """Long-format CSV ``t, node, V, I`` (state components in model order)."""
    n_off = np.concatenate([[0], np.cumsum([m.dims[0] for m in models])])
    width = max(m.dims[0] for m in models)
    names = ["V", "I"] if width == 2 else [f"x{j}" for j in range(width)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node", *names])
        for t, row in enumerate(states):
            for i in range(len(models)):
                vals = list(row[n_off[i]:n_off[i + 1]])
                writer.writerow([t, i, *(repr(float(v)) for v in vals)])
    return Path(path)


def stable(rho):
    """Asymptotic stability verdict on a spectral radius."""
    return rho is not None and rho <= 1.0 - STABILITY_MARGIN
