"""Interconnection structures, closed-loop assembly and stability certificates.

Neighbour ordering convention: the node itself first, then its neighbours in
ascending index order. Data stacking and certificates both rely on it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .datagen import build_lambda
from .dissip import SupplyRate
from .errors import (InvalidInputError, SingularMatrixError,
                     UnsupportedConfigurationError, WellPosednessError)
from .matqmi import DELTA_STRICT, is_pd, is_psd, rcond_sym

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected neighbour sets; ``neighbor_sets[i]`` always contains ``i``."""

    k: int
    neighbor_sets: tuple
    p_dims: tuple

    def __post_init__(self):
        sets = tuple(frozenset(int(j) for j in s) | {i}
                     for i, s in enumerate(self.neighbor_sets))
        if len(sets) != self.k or len(self.p_dims) != self.k:
            raise InvalidInputError("neighbor_sets and p_dims must have k entries")
        for i, s in enumerate(sets):
            for j in s:
                if not 0 <= j < self.k:
                    raise InvalidInputError(f"node {i} has out-of-range neighbour {j}")
                if i not in sets[j]:
                    raise InvalidInputError(f"adjacency not symmetric between {i} and {j}")
        object.__setattr__(self, "neighbor_sets", sets)
        object.__setattr__(self, "p_dims", tuple(int(p) for p in self.p_dims))

    @classmethod
    def from_edges(cls, k, edges, p_dims=None):
        sets = [{i} for i in range(k)]
        for i, j in edges:
            sets[i].add(j)
            sets[j].add(i)
        return cls(k, tuple(sets), tuple(p_dims or [1] * k))

    def ordered_neighbors(self, i):
        """``[i]`` followed by the other neighbours in ascending order."""
        return [i] + sorted(self.neighbor_sets[i] - {i})

    def edges(self):
        return sorted((i, j) for i in range(self.k) for j in self.neighbor_sets[i] if i < j)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.p_dims)]).astype(int)

    def p_tilde(self, i):
        return sum(self.p_dims[j] for j in self.ordered_neighbors(i))


@dataclass(frozen=True, eq=False)
class InterconnectionMatrix:
    M: np.ndarray
    topology: Topology

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        off = self.topology.offsets
        if M.shape != (off[-1], off[-1]):
            raise InvalidInputError(f"M has shape {M.shape}, topology needs {off[-1]}")
        if not np.array_equal(M, M.T):
            raise InvalidInputError("interconnection matrix must be exactly symmetric")
        for i in range(self.topology.k):
            for j in range(self.topology.k):
                if j not in self.topology.neighbor_sets[i] and \
                        np.any(M[off[i]:off[i + 1], off[j]:off[j + 1]] != 0):
                    raise InvalidInputError(f"M has a nonzero block ({i}, {j}) off the topology")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    def block(self, i, j):
        off = self.topology.offsets
        return self.M[off[i]:off[i + 1], off[j]:off[j + 1]]

    def row_restricted(self, i):
        """``[M_ii, M_i sigma(1), ...]`` over the ordered neighbourhood of ``i``."""
        return np.hstack([self.block(i, j) for j in self.topology.ordered_neighbors(i)])


@dataclass(frozen=True, eq=False)
class DiffusiveWeights:
    """Symmetric positive edge weights ``a_ij``; the diagonal is zero."""

    weights: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError("weights must be a square matrix")
        if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0) or np.any(a < 0):
            raise InvalidInputError("weights must be symmetric, nonnegative, zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    def degrees(self):
        return self.weights.sum(axis=1)

    def topology(self):
        k = self.weights.shape[0]
        return Topology(k, tuple(set(np.flatnonzero(self.weights[i])) | {i}
                                 for i in range(k)), (1,) * k)


def diffusive_interconnection(w, topo):
    """Negated weighted Laplacian: ``M_ij = a_ij`` and ``M_ii = -d_i``."""
    if any(p != 1 for p in topo.p_dims):
        raise UnsupportedConfigurationError("diffusive coupling requires p_i = 1")
    a = w.weights
    if a.shape[0] != topo.k:
        raise InvalidInputError("weights and topology disagree on k")
    for i in range(topo.k):
        for j in range(topo.k):
            if i != j and (a[i, j] > 0) != (j in topo.neighbor_sets[i]):
                raise InvalidInputError(f"weight a[{i},{j}] inconsistent with topology")
    M = a - np.diag(a.sum(axis=1))
    return InterconnectionMatrix(0.5 * (M + M.T), topo)


def spectral_radius(a):
    a = np.atleast_2d(a)
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0


def is_schur(a, margin=STABILITY_MARGIN):
    return spectral_radius(a) <= 1.0 - margin


def stack_models(models, gains):
    """Block-diagonal global matrices ``(A + B1 K, B2, C + D1 K, D2)``."""
    a_hat = block_diag(*[m.A + m.B1 @ K for m, K in zip(models, gains)])
    b2 = block_diag(*[m.B2 for m in models])
    c_hat = block_diag(*[m.C + m.D1 @ K for m, K in zip(models, gains)])
    d2 = block_diag(*[m.D2 for m in models])
    return a_hat, b2, c_hat, d2


def assemble_closed_loop(models, gains, M):
    """Eliminate ``v`` and ``y`` from the nominal network; return ``(A_cl, rho)``."""
    if len(models) != len(gains) or len(models) != M.topology.k:
        raise InvalidInputError("models, gains and topology must have k entries")
    for i, (m, K) in enumerate(zip(models, gains)):
        K = np.atleast_2d(K)
        if K.shape != (m.B1.shape[1], m.A.shape[0]):
            raise InvalidInputError(f"gain {i} has shape {K.shape}")
        if m.C.shape[0] != M.topology.p_dims[i]:
            raise InvalidInputError(f"node {i} output dimension disagrees with topology")
    gains = [np.atleast_2d(K) for K in gains]
    a_hat, b2, c_hat, d2 = stack_models(models, gains)
    Mm = M.M
    loop = np.eye(Mm.shape[0]) - d2 @ Mm
    if not np.any(d2):
        a_cl = a_hat + b2 @ Mm @ c_hat
    else:
        if np.linalg.cond(loop) > 1e12:
            raise WellPosednessError("I - D2 M is singular; the interconnection is ill posed")
        a_cl = a_hat + b2 @ Mm @ np.linalg.solve(loop, c_hat)
    return a_cl, spectral_radius(a_cl)


def _supply_blocks(supplies):
    for i, s in enumerate(supplies):
        rc = rcond_sym(s.block())
        if rc < 1e-12:
            raise SingularMatrixError(f"supply block of node {i} is singular", rcond=rc)
    F = block_diag(*[s.F for s in supplies])
    G = block_diag(*[s.G for s in supplies])
    H = block_diag(*[s.H for s in supplies])
    return F, G, H


def global_stability_cert(supplies, M):
    """Centralized test ``M F M^T - M G - G^T M^T + H > 0`` and ``F <= 0``."""
    F, G, H = _supply_blocks(supplies)
    Mm = M.M if isinstance(M, InterconnectionMatrix) else np.atleast_2d(M)
    if Mm.shape != F.shape:
        raise InvalidInputError("supply dimensions disagree with M")
    cond = Mm @ F @ Mm.T - Mm @ G - G.T @ Mm.T + H
    return is_pd(cond) and is_psd(-F)


def local_stability_cert(s, m_row, beta):
    """Decentralized sufficient condition at one node, given its true row of M."""
    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    m_row = np.atleast_2d(np.asarray(m_row, dtype=float))
    if m_row.shape[0] != s.p or m_row.shape[1] < s.p:
        raise InvalidInputError(f"m_row shape {m_row.shape} does not fit p_i = {s.p}")
    pt = m_row.shape[1]
    # the cross term enters the global condition as -(M G + G^T M^T)
    flipped = SupplyRate(s.F, -s.G, s.H, s.parametrization)
    lam = build_lambda(flipped, beta, pt)
    stacked = np.vstack([np.eye(pt), m_row])
    return is_psd(stacked.T @ lam @ stacked) and is_psd(-s.F)


def diffusive_stability_cert(s, d_prime, alpha, delta=DELTA_STRICT):
    """Scalar diffusive-coupling condition with a degree over-estimate ``d_prime``."""
    if s.p != 1:
        raise UnsupportedConfigurationError("diffusive certificate requires p_i = 1")
    if d_prime <= 0:
        raise InvalidInputError("d_prime must be positive")
    F, G, H = s.F[0, 0], s.G[0, 0], s.H[0, 0]
    alpha_tilde = max(1.0 - alpha, 0.0)
    scale = 1.0 + abs(F) + abs(G) + abs(H) + d_prime
    return bool(abs(G - 0.5 * alpha) <= 1e-9 * scale
                and -1.0 / (2.0 * d_prime) + delta < F < -delta
                and H > 2.0 * d_prime * alpha_tilde + delta)
