"""Command-line entry point: ``dissipnet {synth,campaign,simulate,verify}``.

Exit codes: 0 success, 1 infeasible (or a failed verification), 2 error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .datagen import (NoiseBound, build_J, build_theta_pair, inter_data_from_dict,
                      local_data_from_dict)
from .dissip import verify_trajectory_dissipation
from .errors import DissipnetError, InvalidInputError
from .network import assemble_closed_loop, diffusive_interconnection
from .synth import (SynthesisResult, algorithm1_node, algorithm2_node, degree_max,
                    synth_local_dissipative)

OK, INFEASIBLE, ERROR = 0, 1, 2
VERBS = ("synth", "campaign", "simulate", "verify")
SIM_KEYS = {"trial": 0, "alg": "alg2", "T": 500, "noise": "off", "x0_seed": 0,
            "gains_file": None, "node": 0}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(ERROR)


def build_parser():
    p = _Parser(prog="dissipnet", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable); VALUE is parsed as JSON if possible")
    p.add_argument("--euler-a22", action="store_true", help="use the 1 - Ts R / L DGU entry")
    return p


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args):
    cfg = {}
    if args.config is not None:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise InvalidInputError("config must be a JSON object")
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise InvalidInputError(f"--set expects KEY=VALUE, got {item!r}")
        cfg[key] = _parse_value(value)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.euler_a22:
        cfg["euler_a22"] = True
    return cfg


def split_config(cfg):
    """Separate run options (trial, alg, ...) from campaign fields."""
    run = {k: cfg.get(k, default) for k, default in SIM_KEYS.items()}
    campaign = bench.CampaignConfig.from_dict({k: v for k, v in cfg.items() if k not in SIM_KEYS})
    return campaign, run


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1))
    return path


def _instance_path(out, alg, trial):
    return Path(out) / "instances" / f"{alg}_{trial}.json"


def cmd_synth(cfg, out):
    alg = cfg.get("algorithm", cfg.get("alg", "alg2"))
    if "local" in cfg:
        local = local_data_from_dict(cfg["local"])
        inter = inter_data_from_dict(cfg["interconnection"]) if "interconnection" in cfg else None
        eps_l, eps_g = float(cfg.get("eps_l", 1e-3)), float(cfg.get("eps_g", 1e-3))
        alpha_param = float(cfg.get("alpha_param", 1.0))
    else:
        campaign, run = split_config({k: v for k, v in cfg.items() if k != "algorithm"})
        _, _, _, data = bench.instance_data(campaign, int(run["trial"]))
        local, inter = data[int(run["node"])]
        eps_l, eps_g, alpha_param = campaign.eps_l, campaign.eps_g, campaign.alpha_param
    phi = NoiseBound.per_sample_ball(local.X.shape[0] + local.Y.shape[0], local.N, eps_l)
    if alg == "local":
        J, reg = build_J(local, phi)
        res = synth_local_dissipative(J, local.dims)
        res.regularized = {"J": reg}
    else:
        if inter is None:
            raise InvalidInputError(f"{alg} needs interconnection data")
        psi = NoiseBound.per_sample_ball(inter.V_tilde.shape[0], inter.N_tilde, eps_g)
        if alg == "alg1":
            res = algorithm1_node(local, inter, phi, psi)
        elif alg == "alg2":
            res = algorithm2_node(local, inter, phi, psi, alpha_param)
        else:
            raise InvalidInputError(f"unknown algorithm {alg!r}")
    path = _write_json(Path(out) / "synthesis.json", res.to_dict())
    ok = res.feasible and res.inertia_ok
    print(f"{alg}: {res.status}, inertia_ok={res.inertia_ok} -> {path}")
    return OK if ok else INFEASIBLE


def cmd_campaign(cfg, out):
    campaign, _ = split_config(cfg)

    def progress(rec):
        rho = "-" if rec.rho is None else f"{rec.rho:.6f}"
        print(f"trial {rec.trial:4d} {rec.alg}: feasible={int(rec.feasible)} rho={rho}",
              file=sys.stderr)

    report = bench.run_campaign(campaign, out_dir=out, keep_results=True, progress=progress)
    for rec in report.records:
        if rec.feasible:
            _write_json(_instance_path(out, rec.alg, rec.trial), {
                "trial": rec.trial, "alg": rec.alg, "rho": rec.rho,
                "config": campaign.to_dict(),
                "nodes": [r.to_dict() for r in rec.results]})
    report.paths["report"] = _write_json(Path(out) / "report.json", report.to_dict())
    for alg, s in report.summary().items():
        print(f"{alg}: {s['feasible_pct']:.1f}% feasible, {s['mean_node_ms']:.2f} ms/node")
    return OK


def _load_instance(out, run):
    path = run["gains_file"] or _instance_path(out, run["alg"], run["trial"])
    with open(path) as fh:
        inst = json.load(fh)
    return [SynthesisResult.from_dict(d) for d in inst["nodes"]]


def cmd_simulate(cfg, out):
    campaign, run = split_config(cfg)
    trial = int(run["trial"])
    results = _load_instance(out, run)
    models, weights, topo = bench.generate_microgrid(campaign, trial)
    M = diffusive_interconnection(weights, topo)
    n_total = sum(m.dims[0] for m in models)
    x0 = np.random.default_rng(int(run["x0_seed"])).standard_normal(n_total)
    x0 /= np.linalg.norm(x0)
    if run["noise"] not in ("off", "on"):
        raise InvalidInputError("noise must be 'off' or 'on'")
    noise = None if run["noise"] == "off" else (campaign.eps_l, campaign.eps_g)
    states = bench.simulate_closed_loop(models, [r.K for r in results], M, x0, int(run["T"]),
                                        noise=noise, seed=int(run["x0_seed"]))
    path = bench.write_trajectory_csv(Path(out) / f"trajectory_{trial}.csv", states, models)
    final = float(np.linalg.norm(states[-1]))
    print(f"|x(T)| / |x(0)| = {final:.3e} -> {path}")
    return OK


def verify_instance(inst):
    """Replay the oracle checks on a saved feasible instance; returns failure messages."""
    campaign = bench.CampaignConfig.from_dict(inst["config"])
    trial = int(inst["trial"])
    models, weights, M, data = bench.instance_data(campaign, trial)
    results = [SynthesisResult.from_dict(d) for d in inst["nodes"]]
    failures = []
    _, rho = assemble_closed_loop(models, [r.K for r in results], M)
    if not bench.stable(rho):
        failures.append(f"rho(A_cl) = {rho:.9f}")
    degrees = weights.degrees()
    for i, (model, res) in enumerate(zip(models, results)):
        if not verify_trajectory_dissipation(model.closed_loop(res.K), res.supply, res.storage,
                                             trials=10000, seed=trial):
            failures.append(f"node {i}: dissipation inequality violated")
        if inst["alg"] == "alg2":
            inter = data[i][1]
            psi = NoiseBound.per_sample_ball(1, inter.N_tilde, campaign.eps_g)
            d_max = degree_max(build_theta_pair(inter, psi)[1])
            if d_max < degrees[i]:
                failures.append(f"node {i}: d_max {d_max:.6f} < degree {degrees[i]:.6f}")
    return failures


def cmd_verify(cfg, out):
    files = sorted((Path(out) / "instances").glob("*.json"))
    if not files:
        raise InvalidInputError(f"no saved instances under {Path(out) / 'instances'}")
    bad = 0
    for path in files:
        with open(path) as fh:
            failures = verify_instance(json.load(fh))
        status = "ok" if not failures else "; ".join(failures)
        print(f"{path.name}: {status}")
        bad += bool(failures)
    print(f"{len(files) - bad}/{len(files)} instances verified")
    return OK if bad == 0 else INFEASIBLE


COMMANDS = {"synth": cmd_synth, "campaign": cmd_campaign, "simulate": cmd_simulate,
            "verify": cmd_verify}


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code in (0, None) else ERROR
    try:
        cfg = load_config(args)
        return COMMANDS[args.verb](cfg, args.out)
    except (DissipnetError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
