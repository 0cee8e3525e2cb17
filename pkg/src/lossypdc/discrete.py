"""Discrete loss model: lossless segments interleaved with virtual beamsplitters.

The medium is cut into M equal segments; each consists of an ideal lossless
squeezer followed by a beamsplitter with field transmission
t_i = exp(-alpha_i dz / 2) that swaps the lost fraction for fresh environment
vacuum.  Only the rows of the global transformation that feed the observable
output are kept (the partial transfer matrices), so memory stays O(M N^2)
instead of O((M N)^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalToleranceError, ValidationError
from .gaussian import CorrelationPair, ModeBasis, hermitize, symmetrize
from .lossless import BogoliubovPair, PropagationTables, _integrate_pair_slow, make_tables


@dataclass
class SegmentChain:
    """Per-segment squeezer pairs plus the (constant) beamsplitter coefficients."""

    segments: list          # BogoliubovPair for [z_{m-1}, z_m], m = 1..M
    t: np.ndarray           # field transmission per beamsplitter
    r: np.ndarray           # field reflection, t^2 + r^2 = 1
    length: float

    @property
    def m(self) -> int:
        return len(self.segments)

    @property
    def n(self) -> int:
        return self.segments[0].n

    @property
    def dz(self) -> float:
        return self.length / self.m


@dataclass
class PartialBogoliubov:
    """Blocks of the open-system transformation that feed the output field.

    Block 0 couples the initial field; block m >= 1 couples the environment
    entering at beamsplitter m.  a(L) = E0 a(0) + F0 a(0)^dag
    + sum_m [Em f_m + Fm f_m^dag].
    """

    e_blocks: list
    f_blocks: list

    @property
    def m(self) -> int:
        return len(self.e_blocks) - 1

    @property
    def n(self) -> int:
        return self.e_blocks[0].shape[0]

    def gram_e(self) -> np.ndarray:
        acc = np.zeros((self.n, self.n), complex)
        for blk in self.e_blocks:
            acc += blk @ blk.conj().T
        return hermitize(acc)

    def gram_f(self) -> np.ndarray:
        acc = np.zeros((self.n, self.n), complex)
        for blk in self.f_blocks:
            acc += blk @ blk.conj().T
        return hermitize(acc)

    def commutator_residual(self) -> float:
        """max |sum(E E^H - F F^H) - I|."""
        return float(np.abs(self.gram_e() - self.gram_f() - np.eye(self.n)).max())

    def symmetry_residual(self) -> float:
        """max |sum E F^T - (sum E F^T)^T|."""
        acc = np.zeros((self.n, self.n), complex)
        for e, f in zip(self.e_blocks, self.f_blocks):
            acc += e @ f.T
        return float(np.abs(acc - acc.T).max())


def build_chain(
    gamma: float,
    grid=None,
    pump=None,
    model=None,
    loss=None,
    length: float = 0.0,
    n_segments: int = 1,
    steps_per_segment: int = 50,
    *,
    tables: PropagationTables | None = None,
) -> SegmentChain:
    """Integrate the M lossless segments and attach beamsplitter coefficients.

    The extinction profile must be constant along z; its frequency dependence
    is arbitrary.
    """
    if n_segments < 1:
        raise ValidationError("need at least one segment")
    if tables is None:
        tables = make_tables(grid, pump, model, loss)
    dz = length / n_segments
    t = np.exp(-0.5 * tables.alpha * dz)
    r = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    segments = []
    for mseg in range(n_segments):
        z0, z1 = mseg * dz, (mseg + 1) * dz
        e_slow, f_slow = _integrate_pair_slow(tables, gamma, z0, z1, steps_per_segment)
        phase = np.exp(1j * tables.k * z1)
        segments.append(
            BogoliubovPair(phase[:, None] * e_slow, phase[:, None] * f_slow, span=(z0, z1))
        )
    return SegmentChain(segments=segments, t=t, r=r, length=length)


def assemble_partial(chain: SegmentChain, residual_tol: float = 1e-6) -> PartialBogoliubov:
    """Backward recursion collecting the output-row blocks of the chain.

    Walking from the last segment to the first, Y tracks the Bogoliubov map
    from a field injected after beamsplitter m to the output; each step emits
    the environment block for beamsplitter m and then absorbs segment m.
    """
    mseg, n = chain.m, chain.n
    t, r = chain.t, chain.r
    ye = np.eye(n, dtype=complex)
    yf = np.zeros((n, n), complex)
    e_blocks = [None] * (mseg + 1)
    f_blocks = [None] * (mseg + 1)
    for m in range(mseg, 0, -1):
        e_blocks[m] = ye * r[None, :]
        f_blocks[m] = yf * r[None, :]
        seg = chain.segments[m - 1]
        te = t[:, None] * seg.e
        tf = t[:, None] * seg.f
        ye, yf = ye @ te + yf @ tf.conj(), ye @ tf + yf @ te.conj()
    e_blocks[0] = ye
    f_blocks[0] = yf
    partial = PartialBogoliubov(e_blocks=e_blocks, f_blocks=f_blocks)
    resid = max(partial.commutator_residual(), partial.symmetry_residual())
    if not np.isfinite(resid) or resid > residual_tol:
        raise NumericalToleranceError(
            f"partial transformation residual {resid:.3e} exceeds {residual_tol:.1e}; "
            "increase steps_per_segment"
        )
    return partial


def correlations_from_partial(
    partial: PartialBogoliubov,
    input_state=None,
    env=None,
) -> CorrelationPair:
    """Output correlation matrices of the chain.

    Vacuum everywhere gives c1 = sum F* F^T and c2 = sum E F^T; thermal
    occupations add nbar-weighted contributions from the corresponding
    blocks.
    """
    from .continuous import EnvironmentSpec, InputState

    input_state = input_state or InputState.vacuum()
    env = env or EnvironmentSpec.vacuum()
    if env.kind not in ("vacuum", "thermal"):
        raise ValidationError("only vacuum or spectrally uncorrelated thermal environments are supported")
    if input_state.kind not in ("vacuum", "thermal"):
        raise ValidationError("only vacuum or thermal input states are supported")
    n = partial.n
    nb_in = np.zeros(n) if input_state.kind == "vacuum" else np.broadcast_to(input_state.nbar, (n,)).astype(float)
    nb_env = np.zeros(n) if env.kind == "vacuum" else np.broadcast_to(env.nbar, (n,)).astype(float)

    c1 = np.zeros((n, n), complex)
    c2 = np.zeros((n, n), complex)
    for m, (e, f) in enumerate(zip(partial.e_blocks, partial.f_blocks)):
        nb = nb_in if m == 0 else nb_env
        c1 += (e.conj() * nb[None, :]) @ e.T + (f.conj() * (1.0 + nb)[None, :]) @ f.T
        c2 += (e * (1.0 + nb)[None, :]) @ f.T + (f * nb[None, :]) @ e.T
    return CorrelationPair(hermitize(c1), symmetrize(c2), basis="monochromatic")


def mercer_from_partial(partial: PartialBogoliubov, commute_tol: float = 1e-6):
    """Mercer-Wolf basis straight from the partial transformation.

    The stacked blocks admit a simultaneous SVD because their Gram matrices
    commute (they differ by the identity); the shared left unitary is the
    eigenbasis of sum F F^H.  The per-mode phase freedom, which no rotation
    condition fixes for an open system, is pinned by the same
    ellipse-alignment rule used by the correlation-based construction.

    Returns (basis, lam_e, lam_f) with lam_e^2 - lam_f^2 = 1.
    """
    ge, gf = partial.gram_e(), partial.gram_f()
    resid = np.abs(ge @ gf - gf @ ge).max()
    scale = max(np.abs(ge).max() * np.abs(gf).max(), 1.0)
    if resid > commute_tol * scale:
        raise NumericalToleranceError(
            f"Gram matrices do not commute within tolerance ({resid:.3e}); "
            "the partial transformation is inconsistent"
        )
    mu, q = np.linalg.eigh(gf)
    mu = np.clip(mu[::-1], 0.0, None)
    q = q[:, ::-1]
    u = q.conj().T
    lam_f = np.sqrt(mu)
    lam_e = np.sqrt(1.0 + mu)

    corr = correlations_from_partial(partial)
    phases = np.angle(np.diag(u @ corr.c2 @ u.T))
    u = np.exp(-0.5j * phases)[:, None] * u
    return ModeBasis(u, kind="mercer_wolf"), lam_e, lam_f
