"""Continuous loss model: master equations for the correlation matrices.

Markovian loss enters the propagation equations through the complex
wavevector kappa_i = k_i + i alpha_i / 2 and a noise in-coupling term
sqrt(alpha_i alpha_j) <f_i^(dag) f_j>.  The integrator works in a rotating
frame where the optical phases are removed: the frame variables are
C1~_ij = C1_ij exp(i (k_i - k_j) z) and C2~_ij = C2_ij exp(-i (k_i + k_j) z),
which turns the kappa rotation terms into pure damping and moves the
phase-mismatch factors into the coupling kernel, exactly as the
slowly-varying trick does for the lossless transfer matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalToleranceError, ValidationError
from .gaussian import (
    CorrelationPair,
    covariance_from_correlations,
    hermitize,
    physicality_residual,
    symmetrize,
)
from .lossless import PropagationTables, make_tables


@dataclass(frozen=True)
class EnvironmentSpec:
    """State of the Markovian loss reservoir.

    vacuum: all moments zero.  thermal: <f^dag f> = diag(nbar), <ff> = 0.
    custom: arbitrary constant moments (ff_dag Hermitian, ff symmetric).
    """

    kind: str = "vacuum"
    nbar: np.ndarray | None = None
    ff_dag: np.ndarray | None = None
    ff: np.ndarray | None = None

    @classmethod
    def vacuum(cls) -> "EnvironmentSpec":
        return cls(kind="vacuum")

    @classmethod
    def thermal(cls, nbar) -> "EnvironmentSpec":
        arr = np.atleast_1d(np.asarray(nbar, dtype=float))
        if np.any(arr < 0):
            raise ValidationError("thermal occupation must be non-negative")
        return cls(kind="thermal", nbar=arr)

    @classmethod
    def custom(cls, ff_dag, ff) -> "EnvironmentSpec":
        fd = np.asarray(ff_dag, dtype=complex)
        f2 = np.asarray(ff, dtype=complex)
        if np.abs(fd - fd.conj().T).max() > 1e-10 * max(np.abs(fd).max(), 1.0):
            raise ValidationError("<f^dag f> must be Hermitian")
        if np.abs(f2 - f2.T).max() > 1e-10 * max(np.abs(f2).max(), 1.0):
            raise ValidationError("<f f> must be symmetric")
        return cls(kind="custom", ff_dag=fd, ff=f2)

    def moments(self, n: int) -> tuple:
        """Dense (<f^dag f>, <ff>) for an n-mode grid."""
        if self.kind == "vacuum":
            return np.zeros((n, n), complex), np.zeros((n, n), complex)
        if self.kind == "thermal":
            nb = np.broadcast_to(self.nbar, (n,)).astype(float)
            return np.diag(nb).astype(complex), np.zeros((n, n), complex)
        if self.kind == "custom":
            if self.ff_dag.shape != (n, n):
                raise ValidationError("custom environment moments have the wrong size")
            return self.ff_dag, self.ff
        raise ValidationError(f"unsupported environment kind {self.kind!r}")


@dataclass(frozen=True)
class InputState:
    """Spectrally uncorrelated input state: c1(0) = diag(nbar), c2(0) = 0."""

    kind: str = "vacuum"
    nbar: np.ndarray | None = None

    @classmethod
    def vacuum(cls) -> "InputState":
        return cls(kind="vacuum")

    @classmethod
    def thermal(cls, nbar) -> "InputState":
        arr = np.atleast_1d(np.asarray(nbar, dtype=float))
        if np.any(arr < 0):
            raise ValidationError("thermal occupation must be non-negative")
        return cls(kind="thermal", nbar=arr)

    def correlations(self, n: int) -> CorrelationPair:
        if self.kind == "vacuum":
            return CorrelationPair.vacuum(n)
        if self.kind == "thermal":
            nb = np.broadcast_to(self.nbar, (n,)).astype(float)
            return CorrelationPair(np.diag(nb).astype(complex), np.zeros((n, n), complex))
        raise ValidationError(f"unsupported input kind {self.kind!r}")


def master_rhs(z, c1, c2, gamma, tables: PropagationTables, env: EnvironmentSpec):
    """Laboratory-frame derivatives of the correlation matrices.

    dC1_ij = (-i kappa_i^* + i kappa_j) C1_ij
             + i gamma sum_s (J_js <a^dag_i a^dag_s> - J_is^* <a_s a_j>)
             + sqrt(alpha_i alpha_j) <f^dag_i f_j>
    dC2_ij = (i kappa_i + i kappa_j) C2_ij
             + i gamma sum_s (J_js <a_i a^dag_s> + J_is <a^dag_s a_j>)
             + sqrt(alpha_i alpha_j) <f_i f_j>
    with <a_i a^dag_s> = d_is + C1_si.  The output preserves structure:
    dC1 is Hermitian and dC2 symmetric whenever the inputs are.
    """
    c1 = np.asarray(c1, dtype=complex)
    c2 = np.asarray(c2, dtype=complex)
    n = tables.n
    k, alpha = tables.k, tables.alpha
    kappa = k + 0.5j * alpha
    # lab-frame coupling J(z) = G(z) with the free phases put back
    u = np.exp(1j * k * z)
    j = tables.coupling(z) * np.outer(u, u)

    rot1 = (-1j * kappa.conj())[:, None] + (1j * kappa)[None, :]
    d1 = rot1 * c1 + 1j * gamma * (c2.conj() @ j - j.conj() @ c2)
    rot2 = (1j * kappa)[:, None] + (1j * kappa)[None, :]
    d2 = rot2 * c2 + 1j * gamma * (j + c1.T @ j + j @ c1)

    fd, ff = env.moments(n)
    root = np.sqrt(alpha)
    amp = np.outer(root, root)
    d1 = d1 + amp * fd
    d2 = d2 + amp * ff
    return d1, d2


def integrate_master(
    gamma: float,
    grid=None,
    pump=None,
    model=None,
    loss=None,
    input_state: InputState | None = None,
    env: EnvironmentSpec | None = None,
    length: float = 0.0,
    steps: int = 1000,
    *,
    tables: PropagationTables | None = None,
    check: bool = True,
    physicality_tol: float = 1e-8,
) -> CorrelationPair:
    """Propagate the correlation matrices through a lossy medium of ``length``.

    Fixed-step RK4 in the rotating frame; Hermiticity of c1 and symmetry of
    c2 are re-imposed after every step to suppress floating-point drift.
    The returned state carries the laboratory-frame phases at z = length.
    """
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    if steps < 1:
        raise ValidationError("steps must be at least 1")
    if tables is None:
        tables = make_tables(grid, pump, model, loss)
    n = tables.n
    input_state = input_state or InputState.vacuum()
    env = env or EnvironmentSpec.vacuum()
    init = input_state.correlations(n)

    c1 = np.array(init.c1, dtype=complex)
    c2 = np.array(init.c2, dtype=complex)
    alpha = tables.alpha
    k = tables.k
    damp = 0.5 * (alpha[:, None] + alpha[None, :])
    fd, ff = env.moments(n)
    root_amp = np.outer(np.sqrt(alpha), np.sqrt(alpha))
    drive1_const = root_amp * fd
    drive2_const = root_amp * ff
    env_is_diagonal = (
        env.kind in ("vacuum", "thermal")
        or (np.abs(drive1_const - np.diag(np.diag(drive1_const))).max() == 0 and np.abs(drive2_const).max() == 0)
    )

    h = length / steps
    ig = 1j * gamma

    from .lossless import _CouplingCursor

    cursor = _CouplingCursor(tables, 0.0, 0.5 * h)

    def rhs(c1v, c2v, g, z):
        d1 = -damp * c1v + ig * (c2v.conj() @ g - g.conj() @ c2v)
        d2 = -damp * c2v + ig * (g + c1v.T @ g + g @ c1v)
        if env_is_diagonal:
            d1 = d1 + drive1_const
        else:
            # off-diagonal environment moments pick up frame phases
            u1 = np.exp(1j * k * z)
            d1 = d1 + drive1_const * np.outer(u1, u1.conj())
            d2 = d2 + drive2_const * np.outer(u1.conj(), u1.conj())
        return d1, d2

    z = 0.0
    for _ in range(steps):
        g1 = cursor.current()
        cursor.advance_half()
        g2 = cursor.current()
        cursor.advance_half()
        g4 = cursor.current()

        a1, b1 = rhs(c1, c2, g1, z)
        a2, b2 = rhs(c1 + 0.5 * h * a1, c2 + 0.5 * h * b1, g2, z + 0.5 * h)
        a3, b3 = rhs(c1 + 0.5 * h * a2, c2 + 0.5 * h * b2, g2, z + 0.5 * h)
        a4, b4 = rhs(c1 + h * a3, c2 + h * b3, g4, z + h)
        c1 += (h / 6.0) * (a1 + 2.0 * (a2 + a3) + a4)
        c2 += (h / 6.0) * (b1 + 2.0 * (b2 + b3) + b4)
        c1 = hermitize(c1)
        c2 = symmetrize(c2)
        z += h

    # restore laboratory-frame phases at z = length
    p = np.exp(1j * k * length)
    c1 = c1 * np.outer(p.conj(), p)
    c2 = c2 * np.outer(p, p)
    out = CorrelationPair(hermitize(c1), symmetrize(c2), basis="monochromatic")
    if check:
        if not np.all(np.isfinite(c1)) or not np.all(np.isfinite(c2)):
            raise NumericalToleranceError(
                "integration diverged (non-finite correlations); reduce the gain or step size"
            )
        resid = physicality_residual(covariance_from_correlations(out, check=False))
        if resid < -physicality_tol:
            raise NumericalToleranceError(
                f"integration produced an unphysical state (min eig sigma + i Omega = {resid:.3e}); "
                f"increase steps (currently {steps})"
            )
    return out


def single_mode_oracle(gamma_eff: float, alpha: float, length: float) -> float:
    """Squeezed-quadrature variance of a single-mode lossy squeezer.

    Closed-form solution of dV/dz = -(alpha + 2 gamma) V + alpha with
    V(0) = 1, the single-mode reduction of the master equations at
    S = 1, dk = 0, k = 0:

        V(L) = exp(-(alpha + 2 gamma) L) + alpha (1 - exp(-(alpha + 2 gamma) L)) / (alpha + 2 gamma)
    """
    rate = alpha + 2.0 * gamma_eff
    decay = np.exp(-rate * length)
    if rate == 0.0:
        return 1.0
    return float(decay + alpha * (1.0 - decay) / rate)
