"""Broadband mode bases for lossy squeezed light and per-basis reports.

Three constructions are provided for mixed (lossy) states:

* Mercer-Wolf: eigenbasis of <a^dag a>, phases rotated so each mode's
  noise ellipse is axis-aligned.  Minimises the occupied-mode count.
* Williamson-Euler: the left orthogonal factor of the Euler decomposition
  of the Williamson symplectic, i.e. the passive transformation in the
  thermal-state-through-squeezer normal form of the covariance matrix.
* Maximally squeezed (MSq): recursive construction in which mode 1 carries
  the smallest quadrature variance attainable in the whole system and each
  later mode the smallest in the remaining orthogonal complement.

For a pure state all three coincide with the Schmidt basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DecompositionError, ValidationError
from .gaussian import (
    CorrelationPair,
    ModeBasis,
    covariance_from_correlations,
    hermitize,
    mode_count,
    purity,
    quadrature_report,
    reduced_covariance,
    symmetrize,
    symplectic_form,
    symplectic_from_unitary,
    transform_correlations,
    unitary_from_orthogonal_symplectic,
)

_IDENTITY_TOL = 1e-12


def _canonical_degenerate_basis(vectors: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of a degenerate eigenspace.

    Successively projects coordinate directions (lowest index first) onto the
    subspace, which picks, among equivalent eigenvectors, the one with the
    largest weight at the lowest frequency index.
    """
    n, g = vectors.shape
    proj = vectors @ vectors.conj().T
    chosen = []
    for j in range(n):
        cand = proj[:, j].copy()
        for c in chosen:
            cand -= c * (c.conj() @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-7:
            chosen.append(cand / norm)
            if len(chosen) == g:
                break
    if len(chosen) < g:
        return vectors  # pathological subspace; keep the solver's basis
    return np.stack(chosen, axis=1)


def _fix_vector_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a complex vector so its largest-magnitude entry is real positive."""
    j = int(np.argmax(np.abs(v)))
    ph = v[j]
    if np.abs(ph) == 0:
        return v
    return v * (np.abs(ph) / ph)


def mercer_wolf(corr: CorrelationPair) -> ModeBasis:
    """Mercer-Wolf basis: eigenbasis of <a^dag a> with aligned ellipses.

    Eigenvalues are taken in descending order; within degenerate groups the
    basis is pinned by the lowest-index projection rule.  The per-mode phase
    is chosen so that <A_i A_i> becomes real and non-negative, putting the
    squeezed quadrature on the P axis.  Modes with <B_i B_i> = 0 keep phase
    zero.
    """
    corr.validate()
    n = corr.n
    w, v = np.linalg.eigh(hermitize(corr.c1))
    w = w[::-1]
    v = v[:, ::-1]

    scale = max(abs(w[0]), 1.0)
    start = 0
    for i in range(1, n + 1):
        if i == n or abs(w[i] - w[start]) > 1e-10 * scale:
            if i - start > 1:
                v[:, start:i] = _canonical_degenerate_basis(v[:, start:i])
            for j in range(start, i):
                v[:, j] = _fix_vector_phase(v[:, j])
            start = i

    u = v.T
    bb = np.diag(u @ corr.c2 @ u.T)
    phases = np.where(np.abs(bb) > 0, np.angle(bb), 0.0)
    u = np.exp(-0.5j * phases)[:, None] * u
    return ModeBasis(u, kind="mercer_wolf")


@dataclass
class WilliamsonDecomposition:
    """sigma = S diag(nu; nu) S^T with S symplectic and nu >= 1."""

    s: np.ndarray
    nu: np.ndarray

    @property
    def n(self) -> int:
        return self.nu.size

    @property
    def d(self) -> np.ndarray:
        return np.diag(np.concatenate([self.nu, self.nu]))


@dataclass
class EulerFactors:
    """S = O_l diag(e^r; e^-r) O_r with orthogonal symplectic factors, r descending."""

    o_left: np.ndarray
    o_right: np.ndarray
    r: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        return np.diag(np.concatenate([np.exp(self.r), np.exp(-self.r)]))


def _is_scalar_matrix(sigma: np.ndarray, tol: float = _IDENTITY_TOL):
    d = np.diag(sigma)
    c = d[0]
    off = sigma - np.diag(d)
    if np.abs(off).max() <= tol * max(abs(c), 1.0) and np.abs(d - c).max() <= tol * max(abs(c), 1.0):
        return float(c)
    return None


def williamson(sigma: np.ndarray, tol: float = 1e-8, require_physical: bool = True) -> WilliamsonDecomposition:
    """Williamson normal form of a positive-definite covariance matrix.

    Route: with A = sigma^(1/2) Omega sigma^(1/2) (real antisymmetric), the
    real Schur form supplies an orthogonal basis of 2x2 rotation blocks whose
    frequencies are the symplectic eigenvalues; S = sigma^(1/2) K D^(-1/2).
    The contract is the reconstruction and symplecticity residuals, both
    checked before returning.  A scalar sigma = c I short-circuits to S = I.
    """
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    if sigma.shape[0] % 2:
        raise ValidationError("covariance matrix must be 2N x 2N")
    n = sigma.shape[0] // 2

    c = _is_scalar_matrix(sigma)
    if c is not None:
        if c <= 0:
            raise ValidationError("covariance matrix is not positive definite")
        return WilliamsonDecomposition(s=np.eye(2 * n), nu=np.full(n, c))

    w, v = np.linalg.eigh(sigma)
    if w.min() <= 0:
        raise ValidationError("covariance matrix is not positive definite")
    root = (v * np.sqrt(w)) @ v.T
    omega = symplectic_form(n)
    a = root @ omega @ root
    a = 0.5 * (a - a.T)

    t, z = scipy.linalg.schur(a, output="real")
    # pair up the 2x2 antisymmetric blocks, orienting each as [[0, nu], [-nu, 0]]
    cols_q, cols_p, nus = [], [], []
    i = 0
    while i < 2 * n:
        if i + 1 >= 2 * n or abs(t[i + 1, i]) <= 1e-13 * max(abs(t).max(), 1.0):
            raise DecompositionError("Schur form of the symplectic kernel is not block diagonal")
        b = t[i, i + 1]
        if b >= 0:
            cols_q.append(z[:, i])
            cols_p.append(z[:, i + 1])
            nus.append(b)
        else:
            cols_q.append(z[:, i + 1])
            cols_p.append(z[:, i])
            nus.append(-b)
        i += 2
    order = np.argsort(-np.asarray(nus), kind="stable")
    nu = np.asarray(nus)[order]
    k = np.empty((2 * n, 2 * n))
    for newi, oldi in enumerate(order):
        k[:, newi] = cols_q[oldi]
        k[:, n + newi] = cols_p[oldi]

    dsqrt_inv = np.concatenate([1.0 / np.sqrt(nu), 1.0 / np.sqrt(nu)])
    s = root @ k * dsqrt_inv[None, :]

    d = np.diag(np.concatenate([nu, nu]))
    scale = max(np.abs(sigma).max(), 1.0)
    rec = np.abs(s @ d @ s.T - sigma).max() / scale
    symp = np.abs(s @ omega @ s.T - omega).max()
    if rec > tol or symp > tol:
        raise DecompositionError(
            f"Williamson residuals too large (reconstruction {rec:.3e}, symplectic {symp:.3e})"
        )
    if require_physical and nu.min() < 1.0 - 1e-8:
        raise ValidationError(f"symplectic spectrum below vacuum: min nu = {nu.min():.12f}")
    return WilliamsonDecomposition(s=s, nu=nu)


def _pair_complement_with_structure(basis: np.ndarray, omega: np.ndarray):
    """Split a (2m)-dimensional eigenspace invariant under Omega^T into m
    orthonormal vectors plus their Omega^T images."""
    cols = [basis[:, j] for j in range(basis.shape[1])]
    q_vecs, p_vecs = [], []
    while cols:
        v = cols.pop(0)
        for q, p in zip(q_vecs, p_vecs):
            v = v - q * (q @ v) - p * (p @ v)
        nv = np.linalg.norm(v)
        if nv < 1e-10:
            continue
        v /= nv
        jv = omega.T @ v
        for q, p in zip(q_vecs, p_vecs):
            jv = jv - q * (q @ jv) - p * (p @ jv)
        jv = jv - v * (v @ jv)
        njv = np.linalg.norm(jv)
        if njv < 1e-10:
            continue
        q_vecs.append(v)
        p_vecs.append(jv / njv)
    return q_vecs, p_vecs


def euler(s: np.ndarray, tol: float = 1e-8) -> EulerFactors:
    """Euler (Bloch-Messiah for quadratures) decomposition of a symplectic matrix.

    Polar-decompose S = W P; the positive symplectic factor P has its
    spectrum in reciprocal pairs (lam, 1/lam) with Omega^T mapping one
    eigenspace onto the other, which yields an orthogonal symplectic
    diagonalizer O.  Then O_l = W O, O_r = O^T and Lambda = diag(e^r; e^-r).
    """
    s = np.asarray(s, dtype=float)
    if s.shape[0] % 2:
        raise ValidationError("symplectic matrix must be 2N x 2N")
    n = s.shape[0] // 2
    omega = symplectic_form(n)
    if np.abs(s @ omega @ s.T - omega).max() > 1e-6:
        raise ValidationError("input matrix is not symplectic")

    wfac, p = scipy.linalg.polar(s, side="right")
    p = symmetrize(p)
    w, v = np.linalg.eigh(p)
    logs = np.log(w)

    unit = np.abs(logs) <= 1e-10
    big = logs > 1e-10
    order = np.argsort(-w[big], kind="stable")
    big_vecs = v[:, big][:, order]
    big_logs = logs[big][order]

    q_cols = [big_vecs[:, j] for j in range(big_vecs.shape[1])]
    p_cols = [omega.T @ c for c in q_cols]
    uq, up = _pair_complement_with_structure(v[:, unit], omega)
    q_cols += uq
    p_cols += up
    if len(q_cols) != n:
        raise DecompositionError("failed to pair the squeezing eigenspaces")
    r = np.concatenate([big_logs, np.zeros(len(uq))])

    o = np.empty((2 * n, 2 * n))
    for i in range(n):
        o[:, i] = q_cols[i]
        o[:, n + i] = p_cols[i]

    o_left = wfac @ o
    o_right = o.T
    lam = np.concatenate([np.exp(r), np.exp(-r)])
    scale = max(np.abs(s).max(), 1.0)
    rec = np.abs(o_left * lam[None, :] @ o_right - s).max() / scale
    ortho = max(
        np.abs(o_left @ o_left.T - np.eye(2 * n)).max(),
        np.abs(o_right @ o_right.T - np.eye(2 * n)).max(),
    )
    symp = max(
        np.abs(o_left @ omega @ o_left.T - omega).max(),
        np.abs(o_right @ omega @ o_right.T - omega).max(),
    )
    if rec > tol or ortho > tol or symp > tol:
        raise DecompositionError(
            f"Euler residuals too large (reconstruction {rec:.3e}, orthogonality {ortho:.3e}, "
            f"symplecticity {symp:.3e})"
        )
    return EulerFactors(o_left=o_left, o_right=o_right, r=r)


def williamson_euler_basis(sigma: np.ndarray) -> ModeBasis:
    """Williamson-Euler broadband basis, modes ordered by descending squeezing r."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    if _is_scalar_matrix(sigma) is not None:
        return ModeBasis.identity(n, kind="williamson_euler")
    will = williamson(sigma)
    eul = euler(will.s)
    u = unitary_from_orthogonal_symplectic(eul.o_left.T)
    return ModeBasis(u, kind="williamson_euler")


def _unitary_with_first_row(psi: np.ndarray) -> np.ndarray:
    """Unitary completion of a unit row vector via a Householder reflector."""
    m = psi.size
    x = psi.conj()
    nx = np.linalg.norm(x)
    ph = x[0] / np.abs(x[0]) if np.abs(x[0]) > 0 else 1.0
    u = x.copy()
    u[0] += ph * nx
    h = np.eye(m, dtype=complex) - (2.0 / (u.conj() @ u)) * np.outer(u, u.conj())
    return -np.conj(ph) * h  # rows form a unitary whose first row is psi


def msq_basis(sigma: np.ndarray, return_variances: bool = False):
    """Maximally squeezed basis of a covariance matrix.

    Stage s takes the smallest eigenvalue lam_s of the covariance restricted
    to the orthogonal complement of the modes fixed so far; its eigenvector
    (c, d) defines the broadband operator with coefficients d + i c, whose P
    quadrature carries exactly lam_s.  Stage 1 therefore realises the global
    minimum eigenvalue of sigma, the maximal squeezing available in the
    system.  The complement is carried along explicitly, so each stage works
    in its own reduced coordinates and the fixed modes are never revisited.
    """
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    n = sigma.shape[0] // 2
    if _is_scalar_matrix(sigma) is not None:
        basis = ModeBasis.identity(n, kind="msq")
        if return_variances:
            return basis, np.full(n, float(sigma[0, 0]))
        return basis
    w_all = np.linalg.eigvalsh(sigma)
    if w_all.min() <= 0:
        raise ValidationError("covariance matrix is not positive definite")

    complement = np.eye(n, dtype=complex)  # rows: current complement modes
    sig = sigma.copy()
    rows = []
    lams = []
    for stage in range(n):
        m = n - stage
        w, v = scipy.linalg.eigh(sig, subset_by_index=(0, 0))
        lam = float(w[0])
        vec = v[:, 0]
        j = int(np.argmax(np.abs(vec)))
        if vec[j] < 0:
            vec = -vec
        cpart, dpart = vec[:m], vec[m:]
        psi = dpart + 1j * cpart
        rows.append(psi @ complement)
        lams.append(lam)
        if m == 1:
            break
        v_rot = _unitary_with_first_row(psi)
        o_rot = symplectic_from_unitary(v_rot)
        sig = o_rot @ sig @ o_rot.T
        keep = np.concatenate([np.arange(1, m), np.arange(m + 1, 2 * m)])
        sig = symmetrize(sig[np.ix_(keep, keep)])
        complement = v_rot[1:, :] @ complement

    basis = ModeBasis(np.stack(rows, axis=0), kind="msq")
    if return_variances:
        return basis, np.asarray(lams)
    return basis


@dataclass
class BasisReport:
    """Everything the report path needs about one broadband basis."""

    kind: str
    photons: np.ndarray
    q_var: np.ndarray
    p_var: np.ndarray
    k_modes: float
    purities: list          # cumulative subsystem purities P_1, P_12, ...
    sigma: np.ndarray       # covariance in this basis
    mode_abs: np.ndarray    # |U| rows
    mode_phase: np.ndarray  # unwrapped arg(U) rows, anchored at the grid centre

    @property
    def q_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.q_var)

    @property
    def p_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.p_var)

    @property
    def min_p_db(self) -> float:
        return float(self.p_db.min())


def unwrap_phase_centered(row: np.ndarray) -> np.ndarray:
    """1-d phase unwrap with the grid-centre sample kept principal."""
    ph = np.angle(row)
    c = row.size // 2
    left = np.unwrap(ph[: c + 1][::-1])[::-1]
    right = np.unwrap(ph[c:])
    return np.concatenate([left[:-1], right])


def basis_report(corr: CorrelationPair, basis: ModeBasis, n_purity_modes: int = 3) -> BasisReport:
    """Transform the state into ``basis`` and collect the standard observables."""
    corr_b = transform_correlations(corr, basis)
    sigma_b = covariance_from_correlations(corr_b, check=False)
    variances = quadrature_report(sigma_b)
    photons = corr_b.photons()
    purities = []
    for depth in range(1, min(n_purity_modes, basis.n) + 1):
        purities.append(purity(reduced_covariance(sigma_b, np.arange(depth))))
    return BasisReport(
        kind=basis.kind,
        photons=photons,
        q_var=variances.q,
        p_var=variances.p,
        k_modes=mode_count(np.clip(photons, 0.0, None)),
        purities=purities,
        sigma=sigma_b,
        mode_abs=np.abs(basis.u),
        mode_phase=np.stack([unwrap_phase_centered(basis.u[i]) for i in range(basis.n)]),
    )
