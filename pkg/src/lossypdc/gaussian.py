"""Gaussian state data model and scalar diagnostics.

A non-displaced Gaussian field over N frequency modes is fully described by
the pair of second-order correlation matrices ``c1 = <a^dag_i a_j>``
(Hermitian) and ``c2 = <a_i a_j>`` (complex symmetric).  The equivalent real
picture is the 2N x 2N quadrature covariance matrix ``sigma`` in the ordering
x = (q_1..q_N, p_1..p_N), with quadratures q = a^dag + a, p = i(a^dag - a),
so the vacuum state has sigma = I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

BASIS_KINDS = ("schmidt", "mercer_wolf", "williamson_euler", "msq", "custom")


def symplectic_form(n: int) -> np.ndarray:
    """The form Omega = [[0, I], [-I, 0]] in (q..q, p..p) ordering."""
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return omega


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass
class CorrelationPair:
    """Second-order correlation matrices of a non-displaced Gaussian state."""

    c1: np.ndarray
    c2: np.ndarray
    basis: str = "monochromatic"

    def __post_init__(self):
        self.c1 = np.asarray(self.c1, dtype=complex)
        self.c2 = np.asarray(self.c2, dtype=complex)
        if self.c1.ndim != 2 or self.c1.shape[0] != self.c1.shape[1]:
            raise ValidationError("c1 must be a square matrix")
        if self.c2.shape != self.c1.shape:
            raise ValidationError("c1 and c2 must have the same shape")

    @property
    def n(self) -> int:
        return self.c1.shape[0]

    @classmethod
    def vacuum(cls, n: int) -> "CorrelationPair":
        return cls(np.zeros((n, n), complex), np.zeros((n, n), complex))

    def photons(self) -> np.ndarray:
        """Per-mode mean photon numbers (real part of the c1 diagonal)."""
        return np.real(np.diag(self.c1))

    def total_photons(self) -> float:
        return float(np.real(np.trace(self.c1)))

    def validate(self, tol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        """Check Hermiticity of c1, symmetry of c2 and c1 >= 0."""
        scale = max(np.abs(self.c1).max(), 1.0)
        if np.abs(self.c1 - self.c1.conj().T).max() > tol * scale:
            raise ValidationError("c1 is not Hermitian within tolerance")
        scale2 = max(np.abs(self.c2).max(), 1.0)
        if np.abs(self.c2 - self.c2.T).max() > tol * scale2:
            raise ValidationError("c2 is not symmetric within tolerance")
        w = np.linalg.eigvalsh(hermitize(self.c1))
        if w.min() < -psd_tol * max(w.max(), 1.0):
            raise ValidationError(f"c1 has a negative eigenvalue {w.min():.3e}")


@dataclass
class ModeBasis:
    """Unitary change of basis; row i of ``u`` is broadband mode i."""

    u: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.ndim != 2 or self.u.shape[0] != self.u.shape[1]:
            raise ValidationError("basis matrix must be square")
        if self.kind not in BASIS_KINDS:
            raise ValidationError(f"unknown basis kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @classmethod
    def identity(cls, n: int, kind: str = "custom") -> "ModeBasis":
        return cls(np.eye(n, dtype=complex), kind)

    def validate(self, tol: float = 1e-10) -> None:
        resid = np.abs(self.u @ self.u.conj().T - np.eye(self.n)).max()
        if resid > tol:
            raise ValidationError(f"basis is not unitary: residual {resid:.3e}")


def covariance_from_correlations(corr: CorrelationPair, check: bool = True) -> np.ndarray:
    """Quadrature covariance matrix built from the correlation matrices.

    Blocks (vacuum contribution included):
        <q_i q_j> = d_ij + 2 (Re c1 + Re c2)_ij
        <p_i p_j> = d_ij + 2 (Re c1 - Re c2)_ij
        <p_i q_j + q_j p_i>/2 = 2 (Im c2 - Im c1)_ij
    """
    if check:
        corr.validate()
    n = corr.n
    re1, im1 = corr.c1.real, corr.c1.imag
    re2, im2 = corr.c2.real, corr.c2.imag
    eye = np.eye(n)
    sigma = np.empty((2 * n, 2 * n))
    sigma[:n, :n] = eye + 2.0 * (re1 + re2)
    sigma[n:, n:] = eye + 2.0 * (re1 - re2)
    pq = 2.0 * (im2 - im1)
    sigma[n:, :n] = pq
    sigma[:n, n:] = pq.T
    return symmetrize(sigma)


def correlations_from_covariance(sigma: np.ndarray, basis: str = "monochromatic") -> CorrelationPair:
    """Inverse of :func:`covariance_from_correlations`."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    qq, pp = sigma[:n, :n], sigma[n:, n:]
    pq = sigma[n:, :n]
    qp = sigma[:n, n:]
    re1 = (qq + pp - 2.0 * np.eye(n)) / 4.0
    re2 = (qq - pp) / 4.0
    im1 = (qp - pq) / 4.0
    im2 = (qp + pq) / 4.0
    return CorrelationPair(re1 + 1j * im1, re2 + 1j * im2, basis=basis)


def transform_correlations(corr: CorrelationPair, basis: ModeBasis) -> CorrelationPair:
    """Correlation matrices in the broadband basis A = U a.

    c1' = U* c1 U^T and c2' = U c2 U^T; the c1 trace (total photon number)
    is preserved.
    """
    basis.validate()
    if basis.n != corr.n:
        raise ValidationError("basis and correlation sizes differ")
    u = basis.u
    c1 = u.conj() @ corr.c1 @ u.T
    c2 = u @ corr.c2 @ u.T
    return CorrelationPair(hermitize(c1), symmetrize(c2), basis=basis.kind)


def symplectic_from_unitary(basis) -> np.ndarray:
    """Real orthogonal symplectic image O = [[Re U, -Im U], [Im U, Re U]]."""
    u = basis.u if isinstance(basis, ModeBasis) else np.asarray(basis, dtype=complex)
    n = u.shape[0]
    o = np.empty((2 * n, 2 * n))
    o[:n, :n] = u.real
    o[:n, n:] = -u.imag
    o[n:, :n] = u.imag
    o[n:, n:] = u.real
    return o


def unitary_from_orthogonal_symplectic(o: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Read the unitary out of an orthogonal symplectic matrix.

    Raises if ``o`` does not have the [[Re U, -Im U], [Im U, Re U]] block
    structure within ``tol``.
    """
    o = np.asarray(o, dtype=float)
    n = o.shape[0] // 2
    resid = max(
        np.abs(o[:n, :n] - o[n:, n:]).max(),
        np.abs(o[:n, n:] + o[n:, :n]).max(),
    )
    if resid > tol:
        raise ValidationError(f"matrix does not commute with the complex structure: {resid:.3e}")
    return o[:n, :n] + 1j * o[n:, :n]


@dataclass
class QuadratureVariances:
    """Per-mode diagonal variances of a covariance matrix, plus dB values."""

    q: np.ndarray
    p: np.ndarray

    @property
    def q_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.q)

    @property
    def p_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.p)

    @property
    def squeezed(self) -> np.ndarray:
        """True where the P variance is below the vacuum value 1."""
        return self.p < 1.0


def quadrature_report(sigma: np.ndarray) -> QuadratureVariances:
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    d = np.diag(sigma)
    return QuadratureVariances(q=d[:n].copy(), p=d[n:].copy())


def purity(sigma: np.ndarray) -> float:
    """Purity 1/sqrt(det sigma) of the Gaussian state with covariance sigma.

    Computed through the log-determinant of a symmetric factorization so
    large systems do not overflow.
    """
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0 or not np.isfinite(logdet):
        raise ValidationError("covariance matrix is not positive definite")
    w = np.linalg.eigvalsh(sigma)
    if w.min() <= 0:
        raise ValidationError("covariance matrix is not positive definite")
    return float(np.exp(-0.5 * logdet))


def reduced_covariance(sigma: np.ndarray, modes) -> np.ndarray:
    """Covariance of the subsystem spanned by ``modes`` (q/p ordering kept)."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    modes = np.asarray(modes, dtype=int)
    if modes.ndim != 1 or len(set(modes.tolist())) != modes.size:
        raise ValidationError("mode indices must be distinct")
    if modes.size == 0 or modes.min() < 0 or modes.max() >= n:
        raise ValidationError("mode indices out of range")
    idx = np.concatenate([modes, n + modes])
    return sigma[np.ix_(idx, idx)]


def physicality_residual(sigma: np.ndarray) -> float:
    """Most negative eigenvalue of sigma + i Omega (>= 0 for physical states)."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    m = sigma + 1j * symplectic_form(n)
    return float(np.linalg.eigvalsh(hermitize(m)).min())


def check_physical(sigma: np.ndarray, tol: float = 1e-8) -> None:
    resid = physicality_residual(sigma)
    if resid < -tol:
        raise ValidationError(f"state violates the uncertainty bound: min eig = {resid:.3e}")


def mode_count(occupations) -> float:
    """Effective number of occupied modes K = 1 / sum_i n_i^2.

    ``occupations`` are per-mode photon numbers; n_i is their normalised
    distribution.  Equal occupation of m modes gives K = m.
    """
    occ = np.asarray(occupations, dtype=float)
    if occ.ndim != 1 or occ.size == 0:
        raise ValidationError("occupations must be a non-empty vector")
    if np.any(occ < -1e-12 * max(occ.max(), 1.0)):
        raise ValidationError("occupations must be non-negative")
    occ = np.clip(occ, 0.0, None)
    total = occ.sum()
    if total <= 0:
        raise ValidationError("mode count undefined for an empty state")
    frac = occ / total
    return float(1.0 / np.sum(frac**2))


def overlap(u, v) -> np.ndarray:
    """Overlap matrix chi(U, V) = U V^H between two mode bases."""
    mu = u.u if isinstance(u, ModeBasis) else np.asarray(u, dtype=complex)
    mv = v.u if isinstance(v, ModeBasis) else np.asarray(v, dtype=complex)
    if mu.shape != mv.shape:
        raise ValidationError("bases must have the same size")
    return mu @ mv.conj().T
