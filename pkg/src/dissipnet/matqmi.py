"""Symmetric-matrix utilities and quadratic matrix inequality (QMI) sets.

A QMI set is parametrized by a symmetric matrix ``pi`` of size ``q + r``::

    Z_r(pi) = { Z in R^{r x q} : [I_q; Z]^T pi [I_q; Z] >= 0 }

All PSD/PD decisions in the package go through :func:`is_psd` and
:func:`is_pd` so that tolerances are applied in one place.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularMatrixError

TOL_PSD = 1e-8
DELTA_STRICT = 1e-6
PINV_RTOL = 1e-10
RCOND_MIN = 1e-12


def sym(m, name="matrix"):
    """Return ``(m + m.T) / 2`` as a float array after validating it."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return 0.5 * (m + m.T)


def _scale(m):
    return max(1.0, np.linalg.norm(m, 2)) if m.size else 1.0


def min_eig(m):
    m = sym(m)
    if m.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(m, tol=TOL_PSD):
    m = sym(m)
    if m.size == 0:
        return True
    return min_eig(m) >= -tol * _scale(m)


def is_pd(m, delta=DELTA_STRICT):
    m = sym(m)
    if m.size == 0:
        return True
    return min_eig(m) >= delta * _scale(m)


@dataclass(frozen=True)
class Inertia:
    neg: int
    zero: int
    pos: int

    def __iter__(self):
        return iter((self.neg, self.zero, self.pos))


def inertia(m, tol=1e-9):
    """Count negative, zero and positive eigenvalues of a symmetric matrix.

    Eigenvalues with ``|lam| <= tol * max(1, spectral radius)`` count as zero.
    """
    if tol < 0:
        raise InvalidInputError("tol must be nonnegative")
    m = sym(m)
    lam = np.linalg.eigvalsh(m)
    thresh = tol * max(1.0, float(np.max(np.abs(lam))) if lam.size else 0.0)
    neg = int(np.sum(lam < -thresh))
    pos = int(np.sum(lam > thresh))
    return Inertia(neg, lam.size - neg - pos, pos)


def pinv_sym(m, rtol=PINV_RTOL):
    """Moore-Penrose pseudoinverse of a symmetric matrix via its eigenbasis."""
    m = sym(m)
    if m.size == 0:
        return m.copy()
    lam, vec = np.linalg.eigh(m)
    lam_max = np.max(np.abs(lam))
    keep = np.abs(lam) > rtol * lam_max if lam_max > 0 else np.zeros_like(lam, bool)
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return sym((vec * inv) @ vec.T)


def rcond_sym(m):
    """Reciprocal 2-norm condition number of a symmetric matrix."""
    lam = np.abs(np.linalg.eigvalsh(sym(m)))
    if lam.size == 0 or lam.max() == 0:
        return 0.0
    return float(lam.min() / lam.max())


def inv_sym(m, name="matrix", rcond_min=RCOND_MIN):
    m = sym(m, name)
    rc = rcond_sym(m)
    if rc < rcond_min:
        raise SingularMatrixError(f"{name} is numerically singular", rcond=rc)
    return sym(np.linalg.inv(m))


@dataclass(frozen=True, eq=False)
class QmiSet:
    """Partitioned symmetric matrix defining ``Z_r(pi)``; ``Z`` is ``r x q``."""

    pi: np.ndarray
    q: int
    r: int

    def __post_init__(self):
        if self.q < 1 or self.r < 1:
            raise InvalidInputError("block dimensions q and r must be positive")
        pi = sym(self.pi, "pi")
        if pi.shape[0] != self.q + self.r:
            raise InvalidInputError(
                f"pi has dimension {pi.shape[0]}, expected q + r = {self.q + self.r}"
            )
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def pi11(self):
        return self.pi[: self.q, : self.q]

    @property
    def pi12(self):
        return self.pi[: self.q, self.q :]

    @property
    def pi21(self):
        return self.pi[self.q :, : self.q]

    @property
    def pi22(self):
        return self.pi[self.q :, self.q :]

    @classmethod
    def from_blocks(cls, pi11, pi12, pi22):
        pi11 = np.atleast_2d(np.asarray(pi11, float))
        pi22 = np.atleast_2d(np.asarray(pi22, float))
        pi12 = np.asarray(pi12, float).reshape(pi11.shape[0], pi22.shape[0])
        return cls(np.block([[pi11, pi12], [pi12.T, pi22]]), pi11.shape[0], pi22.shape[0])


def qmi_form(qset, z):
    """Evaluate ``[I_q; Z]^T pi [I_q; Z]`` (a q x q symmetric matrix)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape != (qset.r, qset.q):
        raise InvalidInputError(f"Z must have shape {(qset.r, qset.q)}, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("Z has non-finite entries")
    stacked = np.vstack([np.eye(qset.q), z])
    return sym(stacked.T @ qset.pi @ stacked)


def qmi_contains(qset, z, strict=False):
    value = qmi_form(qset, z)
    return is_pd(value) if strict else is_psd(value)


def in_pi_class(qset, tol=TOL_PSD):
    """Membership of ``pi`` in the class for which the matrix S-lemma is exact."""
    pi22 = qset.pi22
    if not is_psd(-pi22, tol):
        return False
    pinv22 = pinv_sym(pi22)
    if not is_psd(qset.pi11 - qset.pi12 @ pinv22 @ qset.pi21, tol):
        return False
    kernel_proj = np.eye(qset.r) - pinv22 @ pi22
    return np.linalg.norm(qset.pi12 @ kernel_proj, 2) <= tol * _scale(qset.pi)


def _rotation(a, b):
    """The block matrix ``[[0, -I_a], [I_b, 0]]`` of size (a + b) x (b + a)."""
    rot = np.zeros((a + b, b + a))
    rot[:a, b:] = -np.eye(a)
    rot[a:, :b] = np.eye(b)
    return rot


def dual_qmi(qset):
    """Dual parametrization: ``Z in Z_r(pi)`` iff ``Z^T in Z_q(dual)``.

    Nonemptiness of the set is the caller's responsibility.
    """
    inv = inv_sym(qset.pi, "pi")
    q, r = qset.q, qset.r
    dual = _rotation(r, q) @ inv @ _rotation(q, r)
    return QmiSet(dual, r, q)


def s_lemma_holds(m, n, alpha):
    """Check the S-lemma certificate ``M - alpha N >= 0``.

    When true, ``Z_r(N)`` is a subset of ``Z_r(M)``.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative")
    if (m.q, m.r) != (n.q, n.r):
        raise InvalidInputError("M and N must have the same block dimensions")
    return is_psd(m.pi - alpha * n.pi)
