"""Supply rates and model-based dissipativity verification.

These routines need the true system matrices. They serve as ground-truth
oracles for the data-driven synthesis in :mod:`dissipnet.synth`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, PreconditionError
from .matqmi import DELTA_STRICT, TOL_PSD, inertia, inv_sym, sym
from .sdp import Affine, SdpProblem, bmat, sdp_solve

DIRECT = "direct"
INVERSE_BLOCK = "inverse-block"


@dataclass(frozen=True, eq=False)
class SupplyRate:
    """Quadratic supply ``s(v, y) = [v; y]^T S [v; y]`` parametrized by (F, G, H).

    With ``parametrization="inverse-block"``, ``S = [[H, G^T], [G, F]]^{-1}``;
    with ``"direct"``, ``S`` is the block matrix itself.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    parametrization: str = INVERSE_BLOCK

    def __post_init__(self):
        F = sym(self.F, "F")
        H = sym(self.H, "H")
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if not (F.shape == G.shape == H.shape):
            raise InvalidInputError(
                f"F, G, H must share one square shape, got {F.shape}, {G.shape}, {H.shape}")
        if self.parametrization not in (DIRECT, INVERSE_BLOCK):
            raise InvalidInputError(f"unknown parametrization {self.parametrization!r}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)

    @property
    def p(self):
        return self.F.shape[0]

    def block(self):
        return np.block([[self.H, self.G.T], [self.G, self.F]])

    @classmethod
    def passivity(cls, p=1):
        """Direct-form passivity supply ``v^T y``."""
        return cls(np.zeros((p, p)), 0.5 * np.eye(p), np.zeros((p, p)), DIRECT)

    @classmethod
    def l2_gain(cls, gamma, q=1, p=None):
        """Direct-form finite-gain supply ``gamma^2 |v|^2 - |y|^2``."""
        p = q if p is None else p
        if q != p:
            raise InvalidInputError("SupplyRate stores square blocks; use supply_from_matrix")
        return cls(-np.eye(p), np.zeros((p, q)), gamma**2 * np.eye(q), DIRECT)

    def to_dict(self):
        return {"F": self.F.tolist(), "G": self.G.tolist(), "H": self.H.tolist(),
                "parametrization": self.parametrization}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["F"]), np.array(d["G"]), np.array(d["H"]),
                   d.get("parametrization", INVERSE_BLOCK))


def supply_matrix(s):
    """The matrix ``S`` of the quadratic form in ``(v, y)`` ordering."""
    if isinstance(s, np.ndarray):
        return sym(s, "S")
    if s.parametrization == DIRECT:
        return sym(s.block())
    return inv_sym(s.block(), "supply block [[H, G^T], [G, F]]")


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in
                      (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or \
                D.shape != (C.shape[0], B.shape[1]):
            raise InvalidInputError(
                f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        for name, m in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, m)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


def _check_dims(sys, S):
    if S.shape[0] != sys.q + sys.p:
        raise InvalidInputError(
            f"supply matrix has size {S.shape[0]}, system needs q + p = {sys.q + sys.p}")


def dissipativity_residual(sys, S, P):
    """Left-hand side of the dissipation LMI in ``[x; v]``; PSD iff dissipative with P."""
    S = supply_matrix(S)
    _check_dims(sys, S)
    n, q = sys.n, sys.q
    top = np.block([[np.eye(n), np.zeros((n, q))], [sys.A, sys.B]])
    bot = np.block([[np.zeros((q, n)), np.eye(q)], [sys.C, sys.D]])
    P = np.asarray(P, float)
    mid = np.block([[P, np.zeros((n, n))], [np.zeros((n, n)), -P]])
    return sym(top.T @ mid @ top + bot.T @ S @ bot)


def check_dissipativity(sys, s, margin=DELTA_STRICT):
    """Search a storage matrix ``P >= margin*I`` certifying dissipativity.

    Returns ``P`` or ``None`` when the solver certifies infeasibility.
    """
    S = supply_matrix(s)
    _check_dims(sys, S)
    n, q = sys.n, sys.q
    prob = SdpProblem()
    P = prob.symmetric("P", n)
    top = np.block([[np.eye(n), np.zeros((n, q))], [sys.A, sys.B]])
    bot = np.block([[np.zeros((q, n)), np.eye(q)], [sys.C, sys.D]])
    mid = bmat([[P, None], [None, -P]]) if n else None
    lmi = top.T @ mid @ top + Affine.const(bot.T @ S @ bot)
    prob.add_psd(lmi, name="dissipation")
    prob.add_psd(P, margin, name="storage")
    sol = sdp_solve(prob)
    return sym(sol["P"]) if sol.feasible else None


def check_dissipativity_dual(sys, s, margin=DELTA_STRICT):
    """Dual form of :func:`check_dissipativity`, solved in ``Q = P^{-1}``.

    Requires ``In(S) = (p, 0, q)``; returns ``P = Q^{-1}`` or ``None``.
    """
    S = supply_matrix(s)
    _check_dims(sys, S)
    n, q, p = sys.n, sys.q, sys.p
    if tuple(inertia(S)) != (p, 0, q):
        raise PreconditionError(f"supply inertia {tuple(inertia(S))} != {(p, 0, q)}")
    Si = inv_sym(S, "S")
    # [[0, -I_p], [I_q, 0]] S^{-1} [[0, -I_q], [I_p, 0]] written out blockwise
    rotated = np.block([[-Si[q:, q:], Si[q:, :q]], [Si[:q, q:], -Si[:q, :q]]])
    prob = SdpProblem()
    Q = prob.symmetric("Q", n)
    top = np.block([[np.eye(n), np.zeros((n, p))], [sys.A.T, sys.C.T]])
    bot = np.block([[np.zeros((p, n)), np.eye(p)], [sys.B.T, sys.D.T]])
    mid = bmat([[Q, None], [None, -Q]])
    prob.add_psd(top.T @ mid @ top + Affine.const(bot.T @ rotated @ bot), name="dual")
    prob.add_psd(Q, margin, name="storage")
    sol = sdp_solve(prob)
    return inv_sym(sol["Q"], "Q") if sol.feasible else None


def verify_trajectory_dissipation(sys, s, P, trials=10000, seed=0, tol=TOL_PSD):
    """Sample directions ``(x, v)`` and test ``V(x+) - V(x) <= s(v, y)`` pointwise.

    The inequality is homogeneous of degree two, so samples are drawn on the
    unit sphere and the tolerance ``tol * (1 + |P| + |S|)`` is absolute.
    """
    S = supply_matrix(s)
    _check_dims(sys, S)
    P = sym(P, "P")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((trials, sys.n + sys.q))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    x, v = z[:, :sys.n], z[:, sys.n:]
    xp = x @ sys.A.T + v @ sys.B.T
    y = x @ sys.C.T + v @ sys.D.T
    dv = np.einsum("ti,ij,tj->t", xp, P, xp) - np.einsum("ti,ij,tj->t", x, P, x)
    vy = np.hstack([v, y])
    supply = np.einsum("ti,ij,tj->t", vy, S, vy)
    scale = 1.0 + np.linalg.norm(P, 2) + np.linalg.norm(S, 2)
    return bool(np.all(dv <= supply + tol * scale))
