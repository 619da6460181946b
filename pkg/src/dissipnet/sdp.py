"""Minimal LMI modelling layer on top of the Clarabel conic solver.

Expressions are matrix-valued affine functions of scalar decision variables,
stored as ``{variable index: coefficient matrix}`` with key ``None`` for the
constant term. LMIs of this package are tiny (tens of variables), so dense
coefficients are cheaper than a general modelling tool's compile step.
"""

import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, SolverError
from .matqmi import TOL_PSD, sym

_SQRT2 = np.sqrt(2.0)


class Affine:
    __slots__ = ("terms", "shape")
    # make numpy defer ``ndarray @ Affine`` to __rmatmul__
    __array_ufunc__ = None

    def __init__(self, terms, shape):
        self.terms = terms
        self.shape = tuple(shape)

    @classmethod
    def const(cls, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return cls({None: m}, m.shape)

    @classmethod
    def zeros(cls, rows, cols):
        return cls({}, (rows, cols))

    @staticmethod
    def wrap(x):
        return x if isinstance(x, Affine) else Affine.const(x)

    def __add__(self, other):
        other = Affine.wrap(other)
        if other.shape != self.shape:
            raise InvalidInputError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Affine(terms, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return Affine({k: -v for k, v in self.terms.items()}, self.shape)

    def __sub__(self, other):
        return self + (-Affine.wrap(other))

    def __rsub__(self, other):
        return Affine.wrap(other) - self

    def __mul__(self, c):
        if isinstance(c, Affine):
            raise InvalidInputError("product of two affine expressions is not affine")
        c = float(c)
        return Affine({k: c * v for k, v in self.terms.items()}, self.shape)

    __rmul__ = __mul__

    def __matmul__(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Affine({k: v @ m for k, v in self.terms.items()},
                      (self.shape[0], m.shape[1]))

    def __rmatmul__(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Affine({k: m @ v for k, v in self.terms.items()},
                      (m.shape[0], self.shape[1]))

    def times(self, m):
        """Scalar (1x1) expression times a constant matrix."""
        if self.shape != (1, 1):
            raise InvalidInputError("times() needs a scalar expression")
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Affine({k: v[0, 0] * m for k, v in self.terms.items()}, m.shape)

    @property
    def T(self):
        return Affine({k: v.T for k, v in self.terms.items()}, self.shape[::-1])

    def trace(self):
        return Affine({k: np.atleast_2d(np.trace(v)) for k, v in self.terms.items()}, (1, 1))

    def value(self, x):
        out = np.zeros(self.shape)
        for k, v in self.terms.items():
            out += v if k is None else x[k] * v
        return out


def bmat(blocks):
    """Assemble a block matrix from Affine expressions, arrays, or ``None`` (zero)."""
    rows = [[None if b is None else Affine.wrap(b) for b in row] for row in blocks]
    heights = []
    for row in rows:
        hs = {b.shape[0] for b in row if b is not None}
        if len(hs) != 1:
            raise InvalidInputError("each block row needs one consistent nonzero height")
        heights.append(hs.pop())
    widths = []
    for j in range(len(rows[0])):
        ws = {row[j].shape[1] for row in rows if row[j] is not None}
        if len(ws) != 1:
            raise InvalidInputError("each block column needs one consistent nonzero width")
        widths.append(ws.pop())
    r_off = np.concatenate([[0], np.cumsum(heights)])
    c_off = np.concatenate([[0], np.cumsum(widths)])
    shape = (int(r_off[-1]), int(c_off[-1]))
    terms = {}
    for i, row in enumerate(rows):
        for j, b in enumerate(row):
            if b is None:
                continue
            for k, v in b.terms.items():
                if k not in terms:
                    terms[k] = np.zeros(shape)
                terms[k][r_off[i]:r_off[i + 1], c_off[j]:c_off[j + 1]] = v
    return Affine(terms, shape)


@dataclass
class _Constraint:
    expr: Affine
    margin: float
    name: str


@dataclass
class SdpSolution:
    status: str  # "feasible" or "infeasible"
    engine_status: str
    values: dict = field(default_factory=dict)
    x: np.ndarray = None
    solve_time: float = 0.0

    @property
    def feasible(self):
        return self.status == "feasible"

    def __getitem__(self, name):
        return self.values[name]


class SdpProblem:
    """Feasibility/linear-objective SDP with constraints ``expr >= margin * I``."""

    def __init__(self):
        self.n = 0
        self._vars = {}
        self.constraints = []
        self.objective = None

    def _new(self, count):
        idx = list(range(self.n, self.n + count))
        self.n += count
        return idx

    def _register(self, name, expr):
        if name in self._vars:
            raise InvalidInputError(f"variable {name!r} declared twice")
        self._vars[name] = expr
        return expr

    def scalar(self, name):
        (k,) = self._new(1)
        return self._register(name, Affine({k: np.ones((1, 1))}, (1, 1)))

    def symmetric(self, name, dim):
        idx = iter(self._new(dim * (dim + 1) // 2))
        terms = {}
        for j in range(dim):
            for i in range(j + 1):
                e = np.zeros((dim, dim))
                e[i, j] = e[j, i] = 1.0
                terms[next(idx)] = e
        return self._register(name, Affine(terms, (dim, dim)))

    def matrix(self, name, rows, cols):
        idx = iter(self._new(rows * cols))
        terms = {}
        for i in range(rows):
            for j in range(cols):
                e = np.zeros((rows, cols))
                e[i, j] = 1.0
                terms[next(idx)] = e
        return self._register(name, Affine(terms, (rows, cols)))

    def add_psd(self, expr, margin=0.0, name=None):
        expr = Affine.wrap(expr)
        if expr.shape[0] != expr.shape[1]:
            raise InvalidInputError(f"LMI must be square, got {expr.shape}")
        for k, v in expr.terms.items():
            if k is not None and not np.allclose(v, v.T, atol=1e-12):
                raise InvalidInputError(f"LMI {name!r} is not symmetric in the variables")
        self.constraints.append(
            _Constraint(expr, float(margin), name or f"c{len(self.constraints)}"))

    def minimize(self, expr):
        expr = Affine.wrap(expr)
        if expr.shape != (1, 1):
            raise InvalidInputError("objective must be scalar")
        self.objective = expr

    def evaluate(self, x):
        return {name: e.value(x) for name, e in self._vars.items()}

    def residuals(self, x):
        """Smallest eigenvalue of ``expr(x) - margin * I`` per constraint."""
        out = {}
        for c in self.constraints:
            val = sym(c.expr.value(x))
            out[c.name] = (float(np.linalg.eigvalsh(val)[0]) - c.margin,
                           max(1.0, np.linalg.norm(val, 2)))
        return out


def _svec_rows(dim):
    """(i, j, scale) triples in Clarabel's upper-triangular column-major order."""
    return [(i, j, 1.0 if i == j else _SQRT2) for j in range(dim) for i in range(j + 1)]


def _compile(prob):
    lin_rows, psd_blocks = [], []
    for c in prob.constraints:
        (lin_rows if c.expr.shape == (1, 1) else psd_blocks).append(c)
    a_rows, b = [], []

    def emit(c, entries):
        const = c.expr.terms.get(None)
        for i, j, s in entries:
            row = np.zeros(prob.n)
            for k, v in c.expr.terms.items():
                if k is not None:
                    row[k] = -s * 0.5 * (v[i, j] + v[j, i])
            cval = 0.0 if const is None else 0.5 * (const[i, j] + const[j, i])
            if i == j:
                cval -= c.margin
            a_rows.append(row)
            b.append(s * cval)

    for c in lin_rows:
        emit(c, [(0, 0, 1.0)])
    cones, layout = [], []
    if lin_rows:
        cones.append(clarabel.NonnegativeConeT(len(lin_rows)))
        layout.append((None, len(lin_rows)))
    for c in psd_blocks:
        dim = c.expr.shape[0]
        emit(c, _svec_rows(dim))
        cones.append(clarabel.PSDTriangleConeT(dim))
        layout.append((dim, dim * (dim + 1) // 2))
    a = sp.csc_matrix(np.array(a_rows).reshape(len(a_rows), prob.n))
    return a, np.array(b), cones, layout


def _certifies_infeasibility(a, b, z, layout, tol):
    """Check a Farkas certificate: ``z`` in the (self-dual) cone, ``A^T z = 0``, ``b^T z < 0``."""
    z = np.asarray(z, dtype=float)
    gap = float(b @ z)
    if not np.all(np.isfinite(z)) or gap >= 0:
        return False
    z = z / -gap
    if np.linalg.norm(a.T @ z) > tol * max(1.0, np.linalg.norm(z)):
        return False
    start = 0
    for dim, size in layout:
        block = z[start:start + size]
        start += size
        if dim is None:
            if np.min(block) < -tol:
                return False
            continue
        m = np.zeros((dim, dim))
        for (i, j, scale), val in zip(_svec_rows(dim), block):
            m[i, j] = m[j, i] = val / scale
        if np.linalg.eigvalsh(m)[0] < -tol * max(1.0, np.linalg.norm(m, 2)):
            return False
    return True


def sdp_solve(prob, tol_psd=TOL_PSD):
    """Solve ``prob`` with Clarabel.

    Returns an :class:`SdpSolution` whose status is ``"feasible"`` (every
    constraint residual verified) or ``"infeasible"`` (solver certificate;
    a reduced-accuracy one only after checking it here).
    Anything else raises :class:`SolverError`.
    """
    if prob.n == 0:
        raise InvalidInputError("problem declares no variables")
    a, b, cones, layout = _compile(prob)
    q = np.zeros(prob.n)
    if prob.objective is not None:
        for k, v in prob.objective.terms.items():
            if k is not None:
                q[k] = v[0, 0]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = 1e-9
    settings.tol_gap_abs = 1e-9
    settings.tol_gap_rel = 1e-9
    t0 = time.perf_counter()
    try:
        sol = clarabel.DefaultSolver(sp.csc_matrix((prob.n, prob.n)), q, a, b,
                                     cones, settings).solve()
    except Exception as exc:  # the Rust core raises plain exceptions
        raise SolverError(f"solver failed: {exc}") from exc
    elapsed = time.perf_counter() - t0
    status = str(sol.status)
    if status == "PrimalInfeasible" or (
            status == "AlmostPrimalInfeasible"
            and _certifies_infeasibility(a, b, sol.z, layout, 1e-6)):
        return SdpSolution("infeasible", status, solve_time=elapsed)
    if status in ("Solved", "AlmostSolved"):
        x = np.array(sol.x)
        bad = {name: r for name, (r, scale) in prob.residuals(x).items()
               if r < -tol_psd * scale}
        if not bad:
            return SdpSolution("feasible", status, prob.evaluate(x), x, elapsed)
        raise SolverError(f"returned point violates constraints {sorted(bad)}", status)
    raise SolverError("no solution and no infeasibility certificate", status)
