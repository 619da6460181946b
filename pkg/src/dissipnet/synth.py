"""Data-driven synthesis of dissipativity-inducing local state feedback.

Supply rates produced here are always in the inverse-block parametrization,
``S = [[H, G^T], [G, F]]^{-1}``, and the same (F, G, H) feed the
interconnection conditions, so one SDP per node couples the local design
with the network-level stability requirement.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import build_J, build_theta_pair, selector
from .dissip import INVERSE_BLOCK, SupplyRate
from .errors import (ConditioningError, InconsistentDataError, InvalidInputError,
                     UnboundedDegreeError)
from .matqmi import DELTA_STRICT, inertia, rcond_sym, sym
from .sdp import Affine, SdpProblem, bmat, sdp_solve

KAPPA = 1e6
GAIN_RCOND_MIN = 1e-10

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
SOLVER_ERROR = "solver-error"


@dataclass
class SynthesisResult:
    status: str
    K: np.ndarray = None
    P: np.ndarray = None
    L: np.ndarray = None
    supply: SupplyRate = None
    alpha: float = None
    beta: float = None
    tau: float = None
    d_max: float = None
    inertia_ok: bool = False
    regularized: dict = field(default_factory=dict)
    solve_time: float = 0.0
    engine_status: str = ""
    message: str = ""

    @property
    def feasible(self):
        return self.status == FEASIBLE

    @property
    def storage(self):
        """Storage matrix of the closed loop: ``V(x) = x^T P^{-1} x``."""
        return sym(np.linalg.inv(self.P))

    def to_dict(self):
        def arr(m):
            return None if m is None else np.asarray(m).tolist()
        return {
            "status": self.status, "K": arr(self.K), "P": arr(self.P), "L": arr(self.L),
            "supply": None if self.supply is None else self.supply.to_dict(),
            "alpha": self.alpha, "beta": self.beta, "tau": self.tau, "d_max": self.d_max,
            "inertia_ok": self.inertia_ok, "regularized": dict(self.regularized),
            "solve_time": self.solve_time, "engine_status": self.engine_status,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d):
        def arr(key):
            return None if d.get(key) is None else np.array(d[key], dtype=float)
        return cls(
            status=d["status"], K=arr("K"), P=arr("P"), L=arr("L"),
            supply=None if d.get("supply") is None else SupplyRate.from_dict(d["supply"]),
            alpha=d.get("alpha"), beta=d.get("beta"), tau=d.get("tau"), d_max=d.get("d_max"),
            inertia_ok=bool(d.get("inertia_ok", False)), regularized=d.get("regularized", {}),
            solve_time=d.get("solve_time", 0.0), engine_status=d.get("engine_status", ""),
            message=d.get("message", ""))


def _m_hat(P, L, F, G, H, n, m, p):
    """Affine matrix of the local design LMI (blocks n, p, n, m, p, n)."""
    return bmat([
        [P, None, None, None, None, None],
        [None, -F, None, None, G, None],
        [None, None, -P, -L.T, None, None],
        [None, None, -L, Affine.zeros(m, m), None, L],
        [None, G.T, None, None, -H, None],
        [None, None, None, L.T, None, P],
    ])


def _n_hat(J, n):
    d = J.shape[0]
    out = np.zeros((d + n, d + n))
    out[:d, :d] = J
    return out


def _design_problem(J, dims, F=None, G=None, H=None):
    """Declare P, L, alpha and (unless given) F, G, H; add the local design LMI."""
    n, m, p = dims
    if J.shape[0] != 2 * n + m + 2 * p:
        raise InvalidInputError(f"J has size {J.shape[0]}, dims need {2 * n + m + 2 * p}")
    prob = SdpProblem()
    P = prob.symmetric("P", n)
    L = prob.matrix("L", m, n)
    alpha = prob.scalar("alpha")
    F = prob.symmetric("F", p) if F is None else Affine.wrap(F)
    G = prob.matrix("G", p, p) if G is None else Affine.wrap(G)
    H = prob.symmetric("H", p) if H is None else Affine.wrap(H)
    prob.add_psd(_m_hat(P, L, F, G, H, n, m, p) - alpha.times(_n_hat(J, n)), name="design")
    prob.add_psd(P, DELTA_STRICT, name="P")
    prob.add_psd(alpha, 0.0, name="alpha")
    return prob, (F, G, H)


def _extract(sol, fixed=None):
    vals = dict(sol.values)
    if fixed:
        vals.update(fixed)
    P = sym(vals["P"])
    rc = rcond_sym(P)
    if rc < GAIN_RCOND_MIN:
        raise ConditioningError("P is too ill-conditioned to extract K = L P^-1", rcond=rc)
    K = np.linalg.solve(P, vals["L"].T).T
    supply = SupplyRate(vals["F"], vals["G"], vals["H"], INVERSE_BLOCK)
    return K, P, vals["L"], supply


def synth_local_dissipative(J, dims, supply=None):
    """Find K making every data-consistent closed loop dissipative.

    ``supply`` fixes the (inverse-block) supply triple; ``None`` leaves it
    free, normalized by ``trace(H) <= KAPPA * p``. A free triple is kept in
    ``H > 0, F < 0``, which fixes the block's inertia at ``(p, 0, p)``.
    """
    n, m, p = dims
    if supply is None:
        prob, (F, G, H) = _design_problem(J, dims)
        prob.add_psd(H, DELTA_STRICT, name="H")
        prob.add_psd(-F, DELTA_STRICT, name="F")
        prob.add_psd(KAPPA * p - H.trace(), name="normalization")
        fixed = None
    else:
        if supply.parametrization != INVERSE_BLOCK or supply.p != p:
            raise InvalidInputError("fixed supply must be inverse-block with p_i blocks")
        prob, _ = _design_problem(J, dims, supply.F, supply.G, supply.H)
        fixed = {"F": supply.F, "G": supply.G, "H": supply.H}
    sol = sdp_solve(prob)
    if not sol.feasible:
        return SynthesisResult(INFEASIBLE, solve_time=sol.solve_time,
                               engine_status=sol.engine_status)
    K, P, L, s = _extract(sol, fixed)
    return SynthesisResult(FEASIBLE, K, P, L, s, alpha=float(sol["alpha"][0, 0]),
                           inertia_ok=check_inertia_condition(s), solve_time=sol.solve_time,
                           engine_status=sol.engine_status)


def check_inertia_condition(s):
    """True iff ``[[H, G^T], [G, F]]`` has ``p`` negative and ``p`` positive eigenvalues."""
    return tuple(inertia(s.block())) == (s.p, 0, s.p)


def degree_max(theta_hat):
    """Largest weighted degree consistent with scalar interconnection data."""
    theta_hat = sym(theta_hat, "theta_hat")
    pt = theta_hat.shape[0] - 1
    if pt < 1:
        raise InvalidInputError("theta_hat must have size |N_i| + 1 with p_i = 1")
    proj = np.zeros((pt + 1, 2))
    proj[0, 0] = -1.0
    proj[pt, 1] = 1.0
    ups = proj.T @ theta_hat @ proj
    u11, u12, u22 = ups[0, 0], ups[0, 1], ups[1, 1]
    if u22 >= -1e-14 * max(1.0, np.abs(ups).max()):
        raise UnboundedDegreeError(f"Upsilon_22 = {u22:.3e} >= 0")
    disc = u12 * u12 - u11 * u22
    if disc < 0:
        raise InconsistentDataError(f"no degree satisfies the data (discriminant {disc:.3e})")
    return float((-u12 - np.sqrt(disc)) / u22)


def _finish(sol, t0, regularized, fixed=None, d_max=None):
    if not sol.feasible:
        return SynthesisResult(INFEASIBLE, d_max=d_max, regularized=regularized,
                               solve_time=time.perf_counter() - t0,
                               engine_status=sol.engine_status)
    K, P, L, s = _extract(sol, fixed)
    scalars = {k: float(sol[k][0, 0]) for k in ("alpha", "beta", "tau") if k in sol.values}
    return SynthesisResult(FEASIBLE, K, P, L, s, d_max=d_max,
                           inertia_ok=check_inertia_condition(s), regularized=regularized,
                           solve_time=time.perf_counter() - t0,
                           engine_status=sol.engine_status, **scalars)


def algorithm1_node(local, inter, phi, psi):
    """Decentralized design for an unknown symmetric interconnection (one node)."""
    t0 = time.perf_counter()
    dims = local.dims
    p = dims[2]
    if inter.V_tilde.shape[0] != p:
        raise InvalidInputError("interconnection data do not match the node's p_i")
    J, reg_j = build_J(local, phi)
    _, theta_hat, reg_t = build_theta_pair(inter, psi)
    pt = inter.Y_tilde.shape[0]
    prob, (F, G, H) = _design_problem(J, dims)
    beta = prob.scalar("beta")
    tau = prob.scalar("tau")
    lift = np.block([[selector(p, pt), np.zeros((p, p))],
                     [np.zeros((p, pt)), np.eye(p)]])
    core = bmat([[H - beta.times(np.eye(p)), -G.T], [-G, F]])
    lam = lift.T @ core @ lift
    prob.add_psd(-F, 0.0, name="F")
    prob.add_psd(lam - tau.times(theta_hat), name="interconnection")
    prob.add_psd(beta, DELTA_STRICT, name="beta")
    prob.add_psd(tau, 0.0, name="tau")
    prob.add_psd(KAPPA * p - H.trace(), name="normalization")
    sol = sdp_solve(prob)
    return _finish(sol, t0, {"J": reg_j, "theta": reg_t})


def algorithm2_node(local, inter, phi, psi, alpha_param=1.0):
    """Decentralized design for diffusive coupling with scalar outputs (one node)."""
    t0 = time.perf_counter()
    dims = local.dims
    if dims[2] != 1 or inter.V_tilde.shape[0] != 1:
        raise InvalidInputError("diffusive design requires p_i = 1")
    J, reg_j = build_J(local, phi)
    _, theta_hat, reg_t = build_theta_pair(inter, psi)
    d_max = degree_max(theta_hat)
    G = np.array([[0.5 * alpha_param]])
    prob, (F, _, H) = _design_problem(J, dims, G=G)
    alpha_tilde = max(1.0 - alpha_param, 0.0)
    prob.add_psd(-F, DELTA_STRICT, name="F upper")
    if d_max > 0:
        prob.add_psd(F + 1.0 / (2.0 * d_max), DELTA_STRICT, name="F lower")
    prob.add_psd(H, 2.0 * max(d_max, 0.0) * alpha_tilde + DELTA_STRICT, name="H")
    prob.add_psd(KAPPA - H.trace(), name="normalization")
    sol = sdp_solve(prob)
    return _finish(sol, t0, {"J": reg_j, "theta": reg_t}, fixed={"G": G}, d_max=d_max)
