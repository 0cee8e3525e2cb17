"""Lossless propagation: transfer-matrix integration, Bloch-Messiah reduction
and gain calibration.

The input-output map of the quadratic interaction is the Bogoliubov
transformation a(L) = E a(0) + F a^dag(0).  The transfer matrices are
integrated in their slowly-varying form, where the free optical phases
exp(i k_i z) are factored out and only the phase-mismatch phases remain in
the coupling kernel; the fast phases are restored analytically afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dispersion as disp
from .errors import CalibrationError, DecompositionError, NumericalToleranceError, ValidationError
from .gaussian import CorrelationPair, hermitize, symmetrize


@dataclass(frozen=True)
class PropagationTables:
    """Precomputed grid data shared by every propagation solver.

    ``sum_spectrum`` and ``sum_wavevector`` are sampled on the 2N-1 values of
    omega_i + omega_j, so the coupling matrix at any z is assembled from
    O(N) complex exponentials instead of O(N^2).
    """

    k: np.ndarray              # PDC wavevectors k(w_i), rad/um
    alpha: np.ndarray          # intensity extinction, 1/um
    sum_spectrum: np.ndarray   # S(w_i + w_j) on the sum grid
    sum_wavevector: np.ndarray # k_p(w_i + w_j) on the sum grid

    def __post_init__(self):
        n = self.k.size
        if self.alpha.size != n or self.sum_spectrum.size != 2 * n - 1:
            raise ValidationError("inconsistent table sizes")

    @property
    def n(self) -> int:
        return self.k.size

    def coupling(self, z: float) -> np.ndarray:
        """Slow coupling kernel G_ij(z) = S(w_i + w_j) exp(i dk_ij z)."""
        h = self.sum_spectrum * np.exp(1j * self.sum_wavevector * z)
        u = np.exp(-1j * self.k * z)
        idx = np.add.outer(np.arange(self.n), np.arange(self.n))
        return h[idx] * np.outer(u, u)


def make_tables(grid, pump, model, loss=None) -> PropagationTables:
    ws = grid.sum_omegas
    alpha = np.zeros(grid.count) if loss is None else np.asarray(loss.alpha, dtype=float)
    if alpha.size != grid.count:
        raise ValidationError("loss profile size does not match the grid")
    return PropagationTables(
        k=disp.wavevector(model, grid.omegas, "pdc"),
        alpha=alpha,
        sum_spectrum=disp.pump_spectrum(pump, ws),
        sum_wavevector=disp.wavevector(model, ws, "pump"),
    )


def toy_tables(spectrum=1.0, alpha=0.0) -> PropagationTables:
    """Single-mode degenerate toy (S = const, dk = 0, k = 0) for analytics."""
    return PropagationTables(
        k=np.zeros(1),
        alpha=np.array([float(alpha)]),
        sum_spectrum=np.array([float(spectrum)]),
        sum_wavevector=np.zeros(1),
    )


@dataclass
class BogoliubovPair:
    """Transfer matrices (E, F) of a lossless interval ``span`` = (z0, z1)."""

    e: np.ndarray
    f: np.ndarray
    span: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=complex)
        self.f = np.asarray(self.f, dtype=complex)
        if self.e.shape != self.f.shape or self.e.ndim != 2 or self.e.shape[0] != self.e.shape[1]:
            raise ValidationError("E and F must be square matrices of equal size")

    @property
    def n(self) -> int:
        return self.e.shape[0]

    def commutator_residual(self) -> float:
        """max |E E^H - F F^H - I|, zero for an exact Bogoliubov map."""
        r = self.e @ self.e.conj().T - self.f @ self.f.conj().T - np.eye(self.n)
        return float(np.abs(r).max())

    def symmetry_residual(self) -> float:
        """max |E F^T - (E F^T)^T|."""
        m = self.e @ self.f.T
        return float(np.abs(m - m.T).max())

    def validate(self, tol: float = 1e-6) -> None:
        resid = max(self.commutator_residual(), self.symmetry_residual())
        if resid > tol:
            raise ValidationError(f"Bogoliubov relations violated: residual {resid:.3e}")


class _CouplingCursor:
    """Walks the coupling kernel along z using cheap phase recurrences.

    The kernel G(z) = h(z)[i+j] * u_i(z) u_j(z) is rebuilt from the 2N-1
    vector h and the length-N vector u; both advance by constant phase
    factors per half-step, with a periodic exact refresh to cap rounding
    drift.
    """

    REFRESH_EVERY = 64

    def __init__(self, tables: PropagationTables, z0: float, half_step: float):
        self._t = tables
        self._idx = np.add.outer(np.arange(tables.n), np.arange(tables.n))
        self._h_step = np.exp(1j * tables.sum_wavevector * half_step)
        self._u_step = np.exp(-1j * tables.k * half_step)
        self._z0 = z0
        self._half = half_step
        self._count = 0
        self._refresh(z0)

    def _refresh(self, z: float) -> None:
        self._h = self._t.sum_spectrum * np.exp(1j * self._t.sum_wavevector * z)
        self._u = np.exp(-1j * self._t.k * z)

    def current(self) -> np.ndarray:
        return self._h[self._idx] * np.outer(self._u, self._u)

    def advance_half(self) -> None:
        self._count += 1
        if self._count % self.REFRESH_EVERY == 0:
            self._refresh(self._z0 + self._count * self._half)
        else:
            self._h = self._h * self._h_step
            self._u = self._u * self._u_step


def _integrate_pair_slow(tables, gamma, z0, z1, steps, e0=None, f0=None):
    """RK4 for the slowly-varying system dE = i gamma G F*, dF = i gamma G E*.

    Returns the slow matrices at z1; initial conditions default to the
    identity map referenced to z0 (rows carry exp(-i k z0) so that the fast
    matrices are recovered as diag(exp(i k z1)) @ result).
    """
    if steps < 1:
        raise ValidationError("steps must be at least 1")
    n = tables.n
    if e0 is None:
        e = np.diag(np.exp(-1j * tables.k * z0)).astype(complex)
    else:
        e = np.array(e0, dtype=complex)
    f = np.zeros((n, n), complex) if f0 is None else np.array(f0, dtype=complex)
    h = (z1 - z0) / steps
    ig = 1j * gamma
    cursor = _CouplingCursor(tables, z0, 0.5 * h)
    for _ in range(steps):
        g1 = cursor.current()
        cursor.advance_half()
        g2 = cursor.current()
        cursor.advance_half()
        g4 = cursor.current()

        k1e = ig * (g1 @ f.conj())
        k1f = ig * (g1 @ e.conj())
        k2e = ig * (g2 @ (f + 0.5 * h * k1f).conj())
        k2f = ig * (g2 @ (e + 0.5 * h * k1e).conj())
        k3e = ig * (g2 @ (f + 0.5 * h * k2f).conj())
        k3f = ig * (g2 @ (e + 0.5 * h * k2e).conj())
        k4e = ig * (g4 @ (f + h * k3f).conj())
        k4f = ig * (g4 @ (e + h * k3e).conj())
        e += (h / 6.0) * (k1e + 2.0 * (k2e + k3e) + k4e)
        f += (h / 6.0) * (k1f + 2.0 * (k2f + k3f) + k4f)
    return e, f


def integrate_bogoliubov(
    gamma: float,
    grid=None,
    pump=None,
    model=None,
    length: float = 0.0,
    steps: int = 1000,
    *,
    tables: PropagationTables | None = None,
    z0: float = 0.0,
    check: bool = True,
    residual_tol: float = 1e-6,
) -> BogoliubovPair:
    """Bogoliubov transfer matrices of the lossless interval [z0, z0 + length].

    Fixed-step RK4 on the slowly-varying system, fast phases restored at the
    end.  Raises :class:`NumericalToleranceError` when the commutation
    residual exceeds ``residual_tol`` (increase ``steps``).
    """
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    if tables is None:
        tables = make_tables(grid, pump, model)
    z1 = z0 + length
    e, f = _integrate_pair_slow(tables, gamma, z0, z1, steps)
    phase = np.exp(1j * tables.k * z1)
    pair = BogoliubovPair(phase[:, None] * e, phase[:, None] * f, span=(z0, z1))
    if check:
        resid = max(pair.commutator_residual(), pair.symmetry_residual())
        if not np.isfinite(resid) or resid > residual_tol:
            raise NumericalToleranceError(
                f"commutation residual {resid:.3e} exceeds {residual_tol:.1e}; "
                f"increase steps (currently {steps}) or reduce the gain"
            )
    return pair


def vacuum_correlations(pair: BogoliubovPair) -> CorrelationPair:
    """Output correlation matrices for a vacuum input:
    c1 = F* F^T and c2 = E F^T."""
    c1 = pair.f.conj() @ pair.f.T
    c2 = pair.e @ pair.f.T
    return CorrelationPair(hermitize(c1), symmetrize(c2), basis="monochromatic")


@dataclass
class SchmidtDecomposition:
    """Simultaneous SVD of a closed-system Bogoliubov pair.

    Reconstruction: E = U^H diag(lam_e) W and F = U^H diag(lam_f) W*, with
    the rows of ``u`` the output broadband (Schmidt) modes, ``w`` the input
    modes, and lam_e^2 - lam_f^2 = 1 elementwise.  ``lam_f`` is descending.
    """

    u: np.ndarray
    w: np.ndarray
    lam_e: np.ndarray
    lam_f: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def occupations(self) -> np.ndarray:
        """Mean photon number per Schmidt mode for vacuum input."""
        return self.lam_f**2

    def reconstruct(self) -> tuple:
        e = self.u.conj().T @ (self.lam_e[:, None] * self.w)
        f = self.u.conj().T @ (self.lam_f[:, None] * self.w.conj())
        return e, f


def _group_degenerate(values: np.ndarray, atol: float):
    """Split a descending value list into runs closer than ``atol``."""
    groups = []
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or values[start] - values[i] > atol:
            groups.append(list(range(start, i)))
            start = i
    return groups


def _takagi_phases(m: np.ndarray) -> np.ndarray:
    """Unitary P with P m P^T = diag of the singular values, for symmetric ``m``.

    Built from the Takagi factorization m = V S V^T via the SVD
    m = A S B^H: within each group of equal singular values the product
    A_g^T B_g is unitary symmetric and V_g = A_g conj(sqrt(A_g^T B_g));
    non-degenerate values reduce to scalar phase rotations.  Groups whose
    singular value is numerically zero keep the left singular vectors
    unchanged (any phase is valid there).  Returns P = V^H.
    """
    import scipy.linalg

    a, s, bh = np.linalg.svd(m)
    b = bh.conj().T
    v = np.array(a)
    atol = 1e-11 * max(s[0] if s.size else 0.0, 1.0)
    for g in _group_degenerate(s, atol):
        if s[g[0]] <= atol:
            continue
        q = a[:, g].T @ b[:, g]
        q = 0.5 * (q + q.T)
        # q is unitary for a true degenerate group; near the numerical noise
        # floor it degrades to a contraction, so project back to unitary (the
        # F-side block is O(atol) there and any unitary phase is valid, but a
        # non-unitary factor would corrupt the E side)
        if len(g) == 1:
            ph = complex(q[0, 0])
            root = np.array([[np.sqrt(ph / abs(ph)) if abs(ph) > 1e-3 else 1.0]])
        else:
            root, _ = scipy.linalg.polar(scipy.linalg.sqrtm(q))
        v[:, g] = a[:, g] @ root.conj()
    return v.conj().T


def bloch_messiah(pair: BogoliubovPair, tol: float = 1e-8, input_tol: float = 1e-6) -> SchmidtDecomposition:
    """Bloch-Messiah reduction of a closed (invertible) Bogoliubov pair.

    The singular values of F are the Schmidt squeezing amplitudes; because
    E E^H = I + F F^H for a closed system, the left singular vectors of F
    also diagonalize E, so a simultaneous SVD exists.  The per-mode phase
    freedom is fixed by rotating the F-side factor to a non-negative
    diagonal (the principal-branch rotation condition), which makes
    <A_i A_i> real and non-negative in the Schmidt basis.  Open-system
    (partial) transformations are rejected through the commutation residual.
    """
    resid = max(pair.commutator_residual(), pair.symmetry_residual())
    if not np.isfinite(resid) or resid > input_tol:
        raise DecompositionError(
            f"input violates the closed-system relations (residual {resid:.3e}); "
            "a partial/open transformation cannot be reduced"
        )
    e, f = pair.e, pair.f
    n = pair.n

    a, lam_f, _ = np.linalg.svd(f)
    lam_e = np.sqrt(1.0 + lam_f**2)

    u0 = a.conj().T
    w0 = (u0 @ e) / lam_e[:, None]
    m = symmetrize(u0 @ f @ w0.T)
    p = _takagi_phases(m)

    u = p @ u0
    w = p @ w0

    dec = SchmidtDecomposition(u=u, w=w, lam_e=lam_e, lam_f=lam_f)
    re, rf = dec.reconstruct()
    scale = max(np.abs(e).max(), 1.0)
    resid = max(np.abs(re - e).max(), np.abs(rf - f).max()) / scale
    if resid > tol:
        raise DecompositionError(f"reconstruction residual {resid:.3e} exceeds {tol:.1e}")
    return dec


def first_schmidt_photons(tables: PropagationTables, gamma: float, length: float, steps: int) -> float:
    """Photon number of the dominant Schmidt mode (largest eigenvalue of F F^H).

    Works on the slow matrices directly: the fast phases are a unitary
    congruence and do not move the spectrum.
    """
    _, f = _integrate_pair_slow(tables, gamma, 0.0, length, steps)
    return float(np.linalg.eigvalsh(hermitize(f @ f.conj().T))[-1])


def calibrate_gamma(
    target_n1: float,
    grid=None,
    pump=None,
    model=None,
    length: float = 0.0,
    steps: int = 1000,
    tolerance: float = 1e-3,
    *,
    tables: PropagationTables | None = None,
    gamma_max: float | None = None,
    max_iter: int = 40,
) -> float:
    """Gain constant that puts ``target_n1`` photons into the first Schmidt mode.

    The map gamma -> N_1 is monotone; its asinh is nearly linear in gamma, so
    a secant search on asinh(sqrt(N_1)) converges in a handful of iterations.
    The search runs at a reduced step count and the result is verified (and,
    if needed, polished) at the requested ``steps``.  A bracket is maintained
    throughout; if an iterate escapes it, the bracket midpoint is used
    instead, and failure to bracket within (0, gamma_max] raises
    :class:`CalibrationError`.
    """
    if target_n1 <= 0:
        raise ValidationError("target photon number must be positive")
    if tables is None:
        tables = make_tables(grid, pump, model)
    coarse = min(steps, max(100, steps // 5))
    g_target = np.arcsinh(np.sqrt(target_n1))

    # low-gain slope: F(L) ~ i gamma int G dz, so asinh sqrt(N1) ~ gamma * smax
    nz = 201
    zs = np.linspace(0.0, length, nz)
    acc = np.zeros((tables.n, tables.n), complex)
    for i, z in enumerate(zs):
        wgt = 0.5 if i in (0, nz - 1) else 1.0
        acc += wgt * tables.coupling(z)
    acc *= length / (nz - 1)
    smax = np.linalg.norm(acc, 2)
    if smax <= 0:
        raise CalibrationError("coupling kernel is identically zero")
    if gamma_max is None:
        gamma_max = 20.0 * g_target / smax

    cache: dict = {}

    def phi(gamma: float, nsteps: int) -> float:
        key = (gamma, nsteps)
        if key not in cache:
            cache[key] = np.arcsinh(np.sqrt(first_schmidt_photons(tables, gamma, length, nsteps)))
        return cache[key]

    lo, hi = 0.0, None  # bracket on phi(gamma) - g_target
    x0 = min(g_target / smax, gamma_max)
    x1 = min(1.05 * x0, gamma_max)
    f0 = phi(x0, coarse) - g_target
    f1 = phi(x1, coarse) - g_target
    for x, fx in ((x0, f0), (x1, f1)):
        if fx < 0:
            lo = max(lo, x)
        else:
            hi = x if hi is None else min(hi, x)

    gamma = x1
    for it in range(max_iter):
        n1 = np.sinh(phi(gamma, coarse)) ** 2
        if abs(n1 - target_n1) <= 0.3 * tolerance * target_n1:
            break
        if f1 != f0:
            step = f1 * (x1 - x0) / (f1 - f0)
        else:
            step = 0.0
        cand = x1 - step
        if not np.isfinite(cand) or cand <= lo or (hi is not None and cand >= hi) or step == 0.0:
            if hi is None:
                cand = min(2.0 * max(x1, x0), gamma_max)
                if cand >= gamma_max and phi(gamma_max, coarse) - g_target < 0:
                    raise CalibrationError(
                        f"target N1 = {target_n1} not reachable for gamma <= {gamma_max:.3e}"
                    )
            else:
                cand = 0.5 * (lo + hi)
        x0, f0 = x1, f1
        x1 = cand
        f1 = phi(x1, coarse) - g_target
        if f1 < 0:
            lo = max(lo, x1)
        else:
            hi = x1 if hi is None else min(hi, x1)
        gamma = x1
    else:
        raise CalibrationError(f"calibration did not converge in {max_iter} iterations")

    if coarse == steps:
        return gamma

    # verify at full resolution; polish with secant steps on the fine curve
    for _ in range(4):
        n1_full = np.sinh(phi(gamma, steps)) ** 2
        if abs(n1_full - target_n1) <= tolerance * target_n1:
            return gamma
        slope = (f1 - f0) / (x1 - x0) if x1 != x0 and f1 != f0 else None
        if slope is None or slope <= 0:
            slope = g_target / gamma
        gamma = gamma - (phi(gamma, steps) - g_target) / slope
        if gamma <= 0 or gamma > gamma_max:
            raise CalibrationError("calibration polish left the admissible range")
    raise CalibrationError("calibration failed to meet tolerance at full step count")
