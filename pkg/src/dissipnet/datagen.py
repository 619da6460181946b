"""Ground-truth simulation, noisy data collection and data-dependent matrices.

Noise matrices are never stored with the data: they are unmeasured by
construction. Only the simulator sees them.
"""

from dataclasses import dataclass

import numpy as np

from .dissip import LinearSystem
from .errors import (InvalidInputError, PreconditionError, SingularMatrixError,
                     UnsupportedConfigurationError)
from .matqmi import RCOND_MIN, QmiSet, dual_qmi, inertia, rcond_sym, sym

EPS_REG_FACTOR = 1e-9
PER_SAMPLE_BALL = "per-sample-ball"


@dataclass(frozen=True, eq=False)
class SubsystemModel:
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D1: np.ndarray
    D2: np.ndarray

    def __post_init__(self):
        mats = {k: np.atleast_2d(np.asarray(getattr(self, k), dtype=float))
                for k in ("A", "B1", "B2", "C", "D1", "D2")}
        n, m, p = mats["A"].shape[0], mats["B1"].shape[1], mats["C"].shape[0]
        want = {"A": (n, n), "B1": (n, m), "B2": (n, p), "C": (p, n),
                "D1": (p, m), "D2": (p, p)}
        for k, shape in want.items():
            if mats[k].shape != shape:
                raise InvalidInputError(f"{k} has shape {mats[k].shape}, expected {shape}")
            object.__setattr__(self, k, mats[k])

    @property
    def dims(self):
        return self.A.shape[0], self.B1.shape[1], self.C.shape[0]

    def closed_loop(self, K):
        """``(A + B1 K, B2, C + D1 K, D2)`` as a system from ``v`` to ``y``."""
        K = np.atleast_2d(K)
        return LinearSystem(self.A + self.B1 @ K, self.B2, self.C + self.D1 @ K, self.D2)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("A", "B1", "B2", "C", "D1", "D2")}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.array(d[k], dtype=float) for k in ("A", "B1", "B2", "C", "D1", "D2")))


@dataclass(frozen=True, eq=False)
class NoiseBound:
    """QMI bound ``W^T in Z_N(Phi)`` on a noise matrix with ``horizon`` columns."""

    phi11: np.ndarray
    phi12: np.ndarray
    phi22: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi11", sym(self.phi11, "phi11"))
        object.__setattr__(self, "phi22", sym(self.phi22, "phi22"))
        phi12 = np.asarray(self.phi12, dtype=float).reshape(self.dim, self.horizon)
        object.__setattr__(self, "phi12", phi12)

    @classmethod
    def per_sample_ball(cls, dim, horizon, eps):
        """Every noise column satisfies ``|w(t)|^2 <= eps``."""
        if eps < 0 or horizon < 1 or dim < 1:
            raise InvalidInputError("need eps >= 0, horizon >= 1, dim >= 1")
        return cls(horizon * eps * np.eye(dim), np.zeros((dim, horizon)), -np.eye(horizon))

    @property
    def dim(self):
        return self.phi11.shape[0]

    @property
    def horizon(self):
        return self.phi22.shape[0]

    def as_qmi(self):
        return QmiSet.from_blocks(self.phi11, self.phi12, self.phi22)

    def ball_eps(self):
        """``eps`` of a per-sample ball bound; raises for any other shape."""
        eps = self.phi11[0, 0] / self.horizon
        if not (np.allclose(self.phi11, eps * self.horizon * np.eye(self.dim), atol=1e-14)
                and not np.any(self.phi12)
                and np.array_equal(self.phi22, -np.eye(self.horizon))
                and eps >= 0):
            raise UnsupportedConfigurationError("noise bound is not of per-sample-ball form")
        return float(eps)

    def inflated(self, eps_reg):
        return NoiseBound(self.phi11 + eps_reg * np.eye(self.dim), self.phi12, self.phi22)


@dataclass(frozen=True, eq=False)
class LocalData:
    X: np.ndarray
    X_plus: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        cols = set()
        for k in ("X", "X_plus", "U", "V", "Y"):
            m = np.atleast_2d(np.asarray(getattr(self, k), dtype=float))
            object.__setattr__(self, k, m)
            cols.add(m.shape[1])
        if len(cols) != 1 or cols.pop() < 1:
            raise InvalidInputError("local data matrices need one common column count >= 1")
        if self.X.shape != self.X_plus.shape or self.V.shape[0] != self.Y.shape[0]:
            raise InvalidInputError("X/X_plus or V/Y row counts disagree")

    @property
    def N(self):
        return self.X.shape[1]

    @property
    def dims(self):
        return self.X.shape[0], self.U.shape[0], self.Y.shape[0]


@dataclass(frozen=True, eq=False)
class InterconnectionData:
    V_tilde: np.ndarray
    Y_tilde: np.ndarray
    neighbor_order: tuple

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V_tilde, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y_tilde, dtype=float))
        if V.shape[1] != Y.shape[1] or V.shape[1] < 1:
            raise InvalidInputError("V_tilde and Y_tilde need the same column count >= 1")
        object.__setattr__(self, "V_tilde", V)
        object.__setattr__(self, "Y_tilde", Y)
        object.__setattr__(self, "neighbor_order", tuple(int(j) for j in self.neighbor_order))

    @property
    def N_tilde(self):
        return self.V_tilde.shape[1]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_noise(bound, kind=PER_SAMPLE_BALL, seed=0):
    """Draw a noise matrix (``dim x horizon``) satisfying ``bound``.

    Columns are uniform in the Euclidean ball of radius ``sqrt(eps)``.
    """
    if kind != PER_SAMPLE_BALL:
        raise UnsupportedConfigurationError(f"unsupported noise kind {kind!r}")
    eps = bound.ball_eps()
    dim, horizon = bound.dim, bound.horizon
    if eps == 0:
        return np.zeros((dim, horizon))
    rng = _rng(seed)
    direction = rng.standard_normal((dim, horizon))
    direction /= np.linalg.norm(direction, axis=0, keepdims=True)
    radius = np.sqrt(eps) * rng.uniform(size=horizon) ** (1.0 / dim)
    return direction * radius


def excitation(m, N, seed=0, hold=5, amplitude=1.0):
    """Piecewise-constant signal, uniform on ``[-amplitude, amplitude]``, held ``hold`` steps."""
    rng = _rng(seed)
    levels = rng.uniform(-amplitude, amplitude, size=(m, -(-N // hold)))
    return np.repeat(levels, hold, axis=1)[:, :N]


def simulate_collect_local(model, u_signal, v_signal, bound, N, seed=0, x0=None):
    """Open-loop experiment on one subsystem with an exogenous ``v`` signal."""
    n, m, p = model.dims
    u = np.atleast_2d(np.asarray(u_signal, dtype=float))
    v = np.atleast_2d(np.asarray(v_signal, dtype=float))
    if u.shape[0] != m or v.shape[0] != p or u.shape[1] < N or v.shape[1] < N:
        raise InvalidInputError("input signals must provide N samples of the right width")
    if bound.dim != n + p or bound.horizon != N:
        raise InvalidInputError("noise bound must be (n + p) x N")
    W = sample_noise(bound, seed=seed)
    X = np.zeros((n, N + 1))
    X[:, 0] = 0.0 if x0 is None else np.asarray(x0, dtype=float).ravel()
    Y = np.zeros((p, N))
    for t in range(N):
        X[:, t + 1] = model.A @ X[:, t] + model.B1 @ u[:, t] + model.B2 @ v[:, t] + W[:n, t]
        Y[:, t] = model.C @ X[:, t] + model.D1 @ u[:, t] + model.D2 @ v[:, t] + W[n:, t]
    return LocalData(X[:, :N], X[:, 1:], u[:, :N], v[:, :N], Y)


def collect_interconnection(m_row, y_tilde_signal, bound, N_tilde, seed=0, neighbor_order=None):
    """Record ``V_tilde = M_row Y_tilde + Xi`` with sampled interconnection noise."""
    m_row = np.atleast_2d(np.asarray(m_row, dtype=float))
    Y = np.atleast_2d(np.asarray(y_tilde_signal, dtype=float))
    if Y.shape[0] != m_row.shape[1] or Y.shape[1] < N_tilde:
        raise InvalidInputError("y_tilde signal does not match m_row or is too short")
    if bound.dim != m_row.shape[0] or bound.horizon != N_tilde:
        raise InvalidInputError("noise bound must be p_i x N_tilde")
    Y = Y[:, :N_tilde]
    xi = sample_noise(bound, seed=seed)
    order = tuple(range(m_row.shape[1])) if neighbor_order is None else neighbor_order
    return InterconnectionData(m_row @ Y + xi, Y, order)


def simulate_network(models, M, u_signals, w_noise, xi_noise, x0s=None):
    """One open-loop run of the full network with the given noise realizations.

    Returns per-node state (n_i x T+1), input, interconnection input and
    output trajectories. ``v = M y + xi`` is resolved at every step.
    """
    topo = M.topology
    k = topo.k
    T = u_signals[0].shape[1]
    off = topo.offsets
    dims = [mod.dims for mod in models]
    X = [np.zeros((d[0], T + 1)) for d in dims]
    if x0s is not None:
        for i in range(k):
            X[i][:, 0] = np.asarray(x0s[i], dtype=float).ravel()
    V = [np.zeros((d[2], T)) for d in dims]
    Y = [np.zeros((d[2], T)) for d in dims]
    d2 = np.zeros((off[-1], off[-1]))
    for i, mod in enumerate(models):
        d2[off[i]:off[i + 1], off[i]:off[i + 1]] = mod.D2
    loop = np.eye(off[-1]) - d2 @ M.M
    feedthrough = bool(np.any(d2))
    for t in range(T):
        base = np.concatenate([
            mod.C @ X[i][:, t] + mod.D1 @ u_signals[i][:, t] + mod.D2 @ xi_noise[i][:, t]
            + w_noise[i][dims[i][0]:, t] for i, mod in enumerate(models)])
        y = np.linalg.solve(loop, base) if feedthrough else base
        v = M.M @ y + np.concatenate([xi_noise[i][:, t] for i in range(k)])
        for i, mod in enumerate(models):
            n = dims[i][0]
            vi = v[off[i]:off[i + 1]]
            Y[i][:, t] = y[off[i]:off[i + 1]]
            V[i][:, t] = vi
            X[i][:, t + 1] = (mod.A @ X[i][:, t] + mod.B1 @ u_signals[i][:, t]
                              + mod.B2 @ vi + w_noise[i][:n, t])
    return X, V, Y


def collect_network_data(models, M, N, N_tilde, eps_l, eps_g, seed, hold=5,
                         amplitude=1.0, x0s=None):
    """Shared open-loop run yielding ``(LocalData, InterconnectionData)`` per node.

    Local data are the first ``N`` samples, interconnection data the first
    ``N_tilde`` samples of the same run. Each node draws excitation and noise
    from its own stream spawned from ``seed``.
    """
    topo = M.topology
    T = max(N, N_tilde)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(topo.k)
    u_signals, w_noise, xi_noise = [], [], []
    for i, mod in enumerate(models):
        n, m, p = mod.dims
        rng = np.random.default_rng(streams[i])
        u_signals.append(excitation(m, T, rng, hold, amplitude))
        w_noise.append(sample_noise(NoiseBound.per_sample_ball(n + p, T, eps_l), seed=rng))
        xi_noise.append(sample_noise(NoiseBound.per_sample_ball(p, T, eps_g), seed=rng))
    X, V, Y = simulate_network(models, M, u_signals, w_noise, xi_noise, x0s)
    out = []
    for i in range(topo.k):
        local = LocalData(X[i][:, :N], X[i][:, 1:N + 1], u_signals[i][:, :N],
                          V[i][:, :N], Y[i][:, :N])
        order = topo.ordered_neighbors(i)
        inter = InterconnectionData(V[i][:, :N_tilde],
                                    np.vstack([Y[j][:, :N_tilde] for j in order]), order)
        out.append((local, inter))
    return out


def eps_reg_for(phi11, data):
    """Regularization size relative to the noise bound or, failing that, the data scale."""
    scale = float(np.linalg.norm(phi11, 2))
    if data.size:
        scale = max(scale, float(np.linalg.norm(data, 2)) ** 2)
    return EPS_REG_FACTOR * (scale if scale > 0 else 1.0)


def _j_matrix(data, phi):
    n, m, p = data.dims
    top = np.hstack([np.eye(n + p), np.vstack([data.X_plus, data.Y])])
    bottom = np.hstack([np.zeros((n + m + p, n + p)), -np.vstack([data.X, data.U, data.V])])
    lift = np.vstack([top, bottom])
    phi_full = np.block([[phi.phi11, phi.phi12], [phi.phi12.T, phi.phi22]])
    return sym(lift @ phi_full @ lift.T)


def build_J(data, phi, regularize=True):
    """Data matrix whose QMI describes every model consistent with ``data``.

    Returns ``(J, regularized)``. With ``regularize``, a J without positive
    eigenvalues is rebuilt from ``phi11 + eps_reg I``.
    """
    n, m, p = data.dims
    if phi.horizon != data.N or phi.dim != n + p:
        raise InvalidInputError(f"noise bound is {phi.dim}x{phi.horizon}, "
                                f"data need {n + p}x{data.N}")
    J = _j_matrix(data, phi)
    if regularize and inertia(J).pos == 0:
        stacked = np.vstack([data.X_plus, data.Y, data.X, data.U, data.V])
        return _j_matrix(data, phi.inflated(eps_reg_for(phi.phi11, stacked))), True
    return J, False


def _theta(data, psi):
    p = data.V_tilde.shape[0]
    pt = data.Y_tilde.shape[0]
    lift = np.block([[np.eye(p), data.V_tilde], [np.zeros((pt, p)), -data.Y_tilde]])
    psi_full = np.block([[psi.phi11, psi.phi12], [psi.phi12.T, psi.phi22]])
    return sym(lift @ psi_full @ lift.T)


def build_theta_pair(data, psi, regularize=True):
    """Return ``(Theta, Theta_hat, regularized)`` for the interconnection data.

    ``Theta_hat`` describes the data-consistent rows ``M_row`` via
    ``[I; M_row]^T Theta_hat [I; M_row] >= 0``.
    """
    p = data.V_tilde.shape[0]
    pt = data.Y_tilde.shape[0]
    if psi.horizon != data.N_tilde or psi.dim != p:
        raise InvalidInputError(f"noise bound is {psi.dim}x{psi.horizon}, "
                                f"data need {p}x{data.N_tilde}")
    theta = _theta(data, psi)
    regularized = False
    if rcond_sym(theta) < RCOND_MIN and regularize:
        # smallest power-of-ten inflation that makes Theta invertible
        eps_reg = eps_reg_for(psi.phi11, np.vstack([data.V_tilde, data.Y_tilde]))
        for _ in range(4):
            theta = _theta(data, psi.inflated(eps_reg))
            if rcond_sym(theta) >= RCOND_MIN:
                break
            eps_reg *= 10.0
        regularized = True
    rc = rcond_sym(theta)
    if rc < RCOND_MIN:
        raise SingularMatrixError("Theta is singular; Y_tilde may lack full row rank", rcond=rc)
    theta_hat = dual_qmi(QmiSet(theta, p, pt)).pi
    got = tuple(inertia(theta_hat, tol=0.5 * RCOND_MIN))
    if got != (p, 0, pt):
        raise PreconditionError(f"Theta_hat inertia {got} != {(p, 0, pt)}")
    return theta, theta_hat, regularized


def selector(p_i, p_tilde):
    """``E_i = [I_{p_i}, 0]`` picking the node's own block out of the stack."""
    e = np.zeros((p_i, p_tilde))
    e[:, :p_i] = np.eye(p_i)
    return e


def build_lambda(s, beta, p_tilde):
    """``[E 0; 0 I]^T [[H - beta I, G^T], [G, F]] [E 0; 0 I]`` for a numeric supply triple."""
    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    p = s.p
    if p_tilde < p:
        raise InvalidInputError(f"p_tilde = {p_tilde} is smaller than p_i = {p}")
    lift = np.block([[selector(p, p_tilde), np.zeros((p, p))],
                     [np.zeros((p, p_tilde)), np.eye(p)]])
    core = np.block([[s.H - beta * np.eye(p), s.G.T], [s.G, s.F]])
    return sym(lift.T @ core @ lift)


def _load(d, key, shape):
    m = np.array(d[key], dtype=float)
    if m.size != shape[0] * shape[1]:
        raise InvalidInputError(f"{key} does not have shape {shape}")
    return m.reshape(shape)


def local_data_to_dict(data):
    n, m, p = data.dims
    return {"N": data.N, "n": n, "m": m, "p": p,
            **{k: getattr(data, k).tolist() for k in ("X", "X_plus", "U", "V", "Y")}}


def local_data_from_dict(d):
    N, n, m, p = (int(d[k]) for k in ("N", "n", "m", "p"))
    want = {"X": (n, N), "X_plus": (n, N), "U": (m, N), "V": (p, N), "Y": (p, N)}
    return LocalData(**{k: _load(d, k, shape) for k, shape in want.items()})


def inter_data_to_dict(data):
    return {"N_tilde": data.N_tilde, "p": data.V_tilde.shape[0],
            "p_tilde": data.Y_tilde.shape[0], "neighbor_order": list(data.neighbor_order),
            "V_tilde": data.V_tilde.tolist(), "Y_tilde": data.Y_tilde.tolist()}


def inter_data_from_dict(d):
    Nt, p, pt = int(d["N_tilde"]), int(d["p"]), int(d["p_tilde"])
    return InterconnectionData(_load(d, "V_tilde", (p, Nt)), _load(d, "Y_tilde", (pt, Nt)),
                               d["neighbor_order"])
