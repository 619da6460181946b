"""Acceptance criteria, each at its stated tolerance.

Every criterion prints one ``criterion N: PASS|FAIL`` line (collected into the
terminal summary). Campaigns are cached for the session and shared between
criteria; criterion 5 replays its checks over every campaign that ran.
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_invertible
from dissipnet.bench import CampaignConfig, instance_data, run_campaign, simulate_closed_loop, stable
from dissipnet.datagen import NoiseBound, build_theta_pair, collect_interconnection
from dissipnet.dissip import LinearSystem, check_dissipativity, check_dissipativity_dual
from dissipnet.matqmi import QmiSet, dual_qmi, inertia, qmi_contains, s_lemma_holds
from dissipnet.synth import degree_max

BASE = CampaignConfig(k=50, extra_edges=20, N=50, N_tilde=50, eps_l=1e-3, eps_g=1e-3,
                      trials=100, master_seed=0)
EPS_SWEEP = (1e-3, 2.5e-3, 5e-3, 1e-2)
N_SWEEP = (20, 30, 40, 50)
EDGE_SWEEP = (20, 50, 75, 100)

_campaigns = {}


def campaign(algorithm="both", **changes):
    """Run (or reuse) a 100-trial campaign; ``both`` also serves single-algorithm requests."""
    key = tuple(sorted(changes.items()))
    for alg in (algorithm, "both"):
        if (alg, key) in _campaigns:
            return _campaigns[(alg, key)]
    cfg = BASE.replace(algorithm=algorithm, **changes)
    keep = not changes
    report = run_campaign(cfg, keep_results=keep)
    _campaigns[(algorithm, key)] = report
    return report


def report_line(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def fmt(values):
    return " / ".join(f"{v:.0f}%" for v in values)


def non_increasing(values, band=0.0):
    return all(b <= a + band for a, b in zip(values, values[1:]))


def test_criterion_01_baseline_feasibility():
    rep = campaign()
    a1, a2 = rep.feasibility("alg1"), rep.feasibility("alg2")
    ok1, ok2 = a1 >= 98.0, a2 >= 95.0
    report_line(1, ok1 and ok2, f"alg1 {a1:.0f}% (need >= 98), alg2 {a2:.0f}% (need >= 95)")
    assert ok2, f"Algorithm 2 baseline feasibility {a2:.1f}% < 95%"
    assert ok1, f"Algorithm 1 baseline feasibility {a1:.1f}% < 98%"


def test_criterion_02_noise_sweep():
    reps = [campaign(**({} if e == BASE.eps_l else {"eps_l": e, "eps_g": e})) for e in EPS_SWEEP]
    a2 = [r.feasibility("alg2") for r in reps]
    a1 = [r.feasibility("alg1") for r in reps]
    ok2 = non_increasing(a2) and a2[2] <= 15.0 + 20.0 and a2[3] <= 10.0
    ok1 = all(v >= 98.0 for v in a1)
    report_line(2, ok1 and ok2, f"alg2 {fmt(a2)}; alg1 {fmt(a1)} over eps {EPS_SWEEP}")
    assert ok2, f"Algorithm 2 noise trend {a2}"
    assert ok1, f"Algorithm 1 not >= 98% across the noise sweep: {a1}"


def test_criterion_03_data_length():
    a2 = [campaign("alg2", **({} if n == BASE.N else {"N": n, "N_tilde": n})).feasibility("alg2")
          for n in N_SWEEP]
    ok = a2[0] <= 15.0 and a2[-1] >= 90.0 and all(b >= a - 10.0 for a, b in zip(a2, a2[1:]))
    report_line(3, ok, f"alg2 {fmt(a2)} over N {N_SWEEP}")
    assert ok, f"Algorithm 2 data-length trend {a2}"


def test_criterion_04_edge_count():
    reps = [campaign(**({} if e == BASE.extra_edges else {"extra_edges": e})) for e in EDGE_SWEEP]
    a2 = [r.feasibility("alg2") for r in reps]
    a1 = [r.feasibility("alg1") for r in reps]
    ok2 = a2[-1] < a2[0] and all(b < a + 10.0 for a, b in zip(a2, a2[1:]))
    ok1 = all(v >= 98.0 for v in a1)
    report_line(4, ok1 and ok2, f"alg2 {fmt(a2)}; alg1 {fmt(a1)} over extra edges {EDGE_SWEEP}")
    assert ok2, f"Algorithm 2 edge trend {a2}"
    assert ok1, f"Algorithm 1 not >= 98% across the edge sweep: {a1}"


def test_criterion_05_hard_soundness():
    if not _campaigns:
        campaign()
    feasible = unstable = undissipative = 0
    for rep in _campaigns.values():
        for rec in rep.records:
            undissipative += not rec.dissipation_ok
            if rec.feasible:
                feasible += 1
                unstable += not stable(rec.rho)
    ok = unstable == 0 and undissipative == 0
    report_line(5, ok, f"{feasible} feasible instances in {len(_campaigns)} campaigns, "
                       f"{unstable} with rho > 1 - 1e-9, {undissipative} dissipation failures")
    assert ok


def test_criterion_06_convergence():
    rep = campaign()
    models, worst, used = None, 0.0, 0
    for rec in rep.records:
        if not rec.feasible or used == 10:
            continue
        models, _, M, _ = instance_data(rep.config, rec.trial)
        x0 = np.random.default_rng(rec.trial).standard_normal(sum(m.dims[0] for m in models))
        x0 /= np.linalg.norm(x0)
        states = simulate_closed_loop(models, [r.K for r in rec.results], M, x0, 500)
        worst = max(worst, float(np.linalg.norm(states[-1])))
        used += 1
    ok = used == 10 and worst <= 1e-3
    report_line(6, ok, f"{used} instances, max |x(500)| / |x(0)| = {worst:.2e} (need <= 1e-3)")
    assert ok


def _degree_dataset(rng):
    nb = int(rng.integers(1, 7))
    a = rng.uniform(0.1, 1.0, nb)
    m_row = np.concatenate([[-a.sum()], a])[None]
    N = int(rng.integers(4 * (nb + 1), 61))
    Y = rng.standard_normal((nb + 1, N)) * 10 ** rng.uniform(-2, 1)
    return a.sum(), m_row, Y, N


def test_criterion_07_degree_bound():
    rng = np.random.default_rng(7)
    under = 0
    worst_gap = 0.0
    for _ in range(500):
        d, m_row, Y, N = _degree_dataset(rng)
        eps = rng.choice([1e-4, 1e-3, 1e-2]) * float(np.mean(Y**2))
        psi = NoiseBound.per_sample_ball(1, N, eps)
        noisy = collect_interconnection(m_row, Y, psi, N, seed=rng)
        under += degree_max(build_theta_pair(noisy, psi)[1]) < d
        psi0 = NoiseBound.per_sample_ball(1, N, 0.0)
        clean = collect_interconnection(m_row, Y, psi0, N)
        worst_gap = max(worst_gap, abs(degree_max(build_theta_pair(clean, psi0)[1]) - d))
    ok = under == 0 and worst_gap <= 1e-3
    report_line(7, ok, f"500 datasets: {under} under-estimates, "
                       f"noiseless max |d_max - d| = {worst_gap:.1e} (need <= 1e-3)")
    assert ok


def _random_qmi(rng, q, r):
    t = random_invertible(rng, q + r)
    return QmiSet(t @ np.diag([1.0] * q + [-1.0] * r) @ t.T, q, r)


def test_criterion_08_qmi_suite():
    rng = np.random.default_rng(8)
    mismatches, involution_err = 0, 0.0
    for _ in range(1000):
        q, r = (int(v) for v in rng.integers(1, 4, size=2))
        s = _random_qmi(rng, q, r)
        d = dual_qmi(s)
        back = dual_qmi(d)
        involution_err = max(involution_err,
                             float(np.abs(back.pi - s.pi).max() / max(1.0, np.abs(s.pi).max())))
        z = rng.standard_normal((r, q)) * rng.choice([0.1, 1.0, 3.0])
        form = np.vstack([np.eye(q), z]).T @ s.pi @ np.vstack([np.eye(q), z])
        if np.min(np.abs(np.linalg.eigvalsh(form))) < 1e-6 * max(1.0, np.abs(s.pi).max()):
            continue
        mismatches += qmi_contains(s, z) != qmi_contains(d, z.T)
    counterexamples = 0
    for _ in range(300):
        q, r = (int(v) for v in rng.integers(1, 3, size=2))
        n = _random_qmi(rng, q, r)
        alpha = rng.uniform(0.1, 2.0)
        slack = rng.standard_normal((q + r, q + r))
        m = QmiSet(alpha * n.pi + rng.uniform(0, 0.5) * slack @ slack.T, q, r)
        if not s_lemma_holds(m, n, alpha):
            continue
        for _ in range(20):
            z = rng.standard_normal((r, q)) * 2.0
            counterexamples += qmi_contains(n, z) and not qmi_contains(m, z)
    bad_inertia = constructions = 0
    for _ in range(200):
        _, m_row, Y, N = _degree_dataset(rng)
        psi = NoiseBound.per_sample_ball(1, N, float(rng.choice([0.0, 1e-3])))
        _, theta_hat, _ = build_theta_pair(collect_interconnection(m_row, Y, psi, N, seed=rng), psi)
        constructions += 1
        bad_inertia += tuple(inertia(theta_hat, tol=5e-13)) != (1, 0, Y.shape[0])
    ok = mismatches == 0 and involution_err <= 1e-10 and counterexamples == 0 and bad_inertia == 0
    report_line(8, ok, f"round-trip mismatches {mismatches}, involution error "
                       f"{involution_err:.1e}, S-lemma counterexamples {counterexamples}, "
                       f"bad Theta_hat inertia {bad_inertia}/{constructions}")
    assert ok


def test_criterion_09_primal_dual_agreement():
    rng = np.random.default_rng(9)
    disagreements, feasible = 0, 0
    for _ in range(200):
        n, q, p = (int(v) for v in rng.integers(1, 4, size=3))
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.2, 1.0) / max(abs(np.linalg.eigvals(A)))
        sys = LinearSystem(A, rng.standard_normal((n, q)), rng.standard_normal((p, n)),
                           0.5 * rng.standard_normal((p, q)))
        t = np.eye(q + p) + 0.3 * rng.standard_normal((q + p, q + p))
        gain = 10 ** rng.uniform(0.0, 3.0)
        S = t.T @ np.diag([gain] * q + [-1.0] * p) @ t
        primal = check_dissipativity(sys, S) is not None
        dual = check_dissipativity_dual(sys, S) is not None
        feasible += primal
        disagreements += primal != dual
    ok = disagreements == 0
    report_line(9, ok, f"200 pairs ({feasible} feasible): {disagreements} disagreements")
    assert ok


def test_criterion_10_timing():
    rep = campaign()
    t1, t2 = rep.mean_node_ms("alg1"), rep.mean_node_ms("alg2")
    ok = t1 <= 100.0 and t2 <= 100.0
    report_line(10, ok, f"mean per-node time alg1 {t1:.1f} ms, alg2 {t2:.1f} ms (need <= 100)")
    assert ok
