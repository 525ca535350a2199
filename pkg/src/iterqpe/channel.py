"""Quantum channels induced on the target by one Ramsey interferometry cycle.

A cycle prepares the ancilla in ``R_0(pi/2)|0>``, evolves the joint system for
``tau`` under ``sigma_z (x) V + 1 (x) C`` (plus optional Lindblad terms on the
target), rotates the ancilla with ``R_phi(pi/2)`` and reads it out.  Writing
``Y_ab`` for the ancilla blocks of the evolved joint state, the unnormalized
conditional target state for outcome ``alpha`` is

    out_alpha = S/2 + (-1)^alpha (i/2) [e^{-i phi} Y_01 - e^{i phi} Y_10],
    S = Y_00 + Y_11,

which for unitary evolution reproduces ``M_alpha rho M_alpha^dag`` with
``M_alpha = [U_0 - (-1)^alpha e^{i phi} U_1] / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra
from .errors import DegenerateChannelError, DimensionCapError, DomainError
from .model import SIGMA_Z, NoiseSpec, SpectralOperator

FIXED_TOL = 1e-9
SEPARATION_FACTOR = 10.0
LIOUVILLIAN_CAP = 4096

# |psi_q><psi_q| for |psi_q> = R_0(pi/2)|0> = (|0> - i|1>)/sqrt(2)
ANCILLA_PREP = 0.5 * np.array([[1, 1j], [-1j, 1]], dtype=complex)


@dataclass(frozen=True)
class RimSettings:
    tau: float
    phi: float = np.pi / 2

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class KrausPair:
    m0: np.ndarray
    m1: np.ndarray
    lambdas: np.ndarray  # shape (2, s)

    @property
    def operators(self) -> tuple:
        return (self.m0, self.m1)

    def completeness_error(self) -> float:
        d = self.m0.shape[0]
        total = self.m0.conj().T @ self.m0 + self.m1.conj().T @ self.m1
        return float(np.max(np.abs(total - np.eye(d))))


def kraus_eigenvalues(v: SpectralOperator, s: RimSettings) -> np.ndarray:
    """``lambda_{alpha k} = [e^{-i v_k tau} - (-1)^alpha e^{i(phi + v_k tau)}]/2``."""
    a = np.exp(-1j * v.eigenvalues * s.tau)
    b = np.exp(1j * (s.phi + v.eigenvalues * s.tau))
    return np.stack([(a - b) / 2, (a + b) / 2])


def outcome0_probabilities(v: SpectralOperator, s: RimSettings) -> np.ndarray:
    """``p_{0k} = [1 - cos(2 v_k tau + phi)]/2`` per eigenspace."""
    return (1 - np.cos(2 * v.eigenvalues * s.tau + s.phi)) / 2


def build_rim_kraus(v: SpectralOperator, s: RimSettings) -> KrausPair:
    lam = kraus_eigenvalues(v, s)
    proj = v.projectors
    m0 = np.einsum("k,kij->ij", lam[0], proj)
    m1 = np.einsum("k,kij->ij", lam[1], proj)
    return KrausPair(m0, m1, lam)


def natural_rep(kp: KrausPair) -> np.ndarray:
    return sum(np.kron(m, m.conj()) for m in kp.operators)


def _pair_superop(coeff: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """``sum_kl coeff[k, l] P_k (x) conj(P_l)``."""
    return np.einsum("kl,kij,lab->iajb", coeff, proj, proj.conj()).reshape(
        proj.shape[1] ** 2, proj.shape[1] ** 2
    )


def natural_rep_closed_form(v: SpectralOperator, s: RimSettings) -> np.ndarray:
    """Diagonal form ``sum_kl <lambda_l, lambda_k> P_k (x) P_l^T``."""
    lam = kraus_eigenvalues(v, s)
    overlaps = np.einsum("ak,al->kl", lam, lam.conj())
    return _pair_superop(overlaps, v.projectors)


def compose_sequence(v: SpectralOperator, settings) -> np.ndarray:
    """Channel of a whole RIM sequence, ``sum_kl prod_i cos[(v_k - v_l) tau_i] P_k (x) P_l^T``."""
    settings = list(settings)
    if not settings:
        raise DomainError("sequence must contain at least one cycle")
    taus = np.array([s.tau for s in settings])
    gaps = v.eigenvalues[:, None] - v.eigenvalues[None, :]
    coeff = np.prod(np.cos(gaps[None, :, :] * taus[:, None, None]), axis=0)
    return _pair_superop(coeff.astype(complex), v.projectors)


def asymptotic_projector(v: SpectralOperator, settings: RimSettings | None = None) -> np.ndarray:
    """``sum_k P_k (x) P_k^T``, the long-time limit of repeated noiseless cycles.

    With ``settings`` the Kraus eigenvalue vectors are checked pairwise: parallel
    vectors would leave unit-modulus off-diagonal eigenvalues (rotating points).
    """
    if settings is not None:
        lam = kraus_eigenvalues(v, settings)
        overlaps = np.abs(np.einsum("ak,al->kl", lam, lam.conj()))
        np.fill_diagonal(overlaps, 0.0)
        if np.any(overlaps > 1 - 1e-12):
            k, l = np.unravel_index(np.argmax(overlaps), overlaps.shape)
            raise DegenerateChannelError(
                f"Kraus eigenvalue vectors of eigenspaces {k} and {l} are parallel"
            )
    return _pair_superop(np.eye(v.n_distinct, dtype=complex), v.projectors)


# ---------------------------------------------------------------------------
# exact cycle evolution (noiseless, coherent noise, Lindblad)


class CycleEvolution:
    """Joint ancilla-target evolution over one free-evolution window.

    Unitary evolutions keep the two target propagators ``U_0, U_1`` (ancilla
    in ``|0>`` or ``|1>``).  Dissipative ones keep the two block superoperators
    mapping ``|rho>>`` to ``|S>>``, ``|Y_01>>`` and ``|Y_10>>``.
    """

    def __init__(self, tau, u0=None, u1=None, g_sum=None, g_01=None, g_10=None):
        self.tau = float(tau)
        self.u0, self.u1 = u0, u1
        self.g_sum, self.g_01, self.g_10 = g_sum, g_01, g_10

    @property
    def is_unitary(self) -> bool:
        return self.u0 is not None

    @property
    def dimension(self) -> int:
        if self.is_unitary:
            return self.u0.shape[0]
        return int(round(np.sqrt(self.g_sum.shape[0])))

    def blocks(self, rho: np.ndarray):
        """``(S, Y_01, Y_10)`` for a batch of target operators of shape ``(..., d, d)``."""
        if self.is_unitary:
            a = self.u0 @ rho
            b = self.u1 @ rho
            u0d, u1d = self.u0.conj().T, self.u1.conj().T
            s = 0.5 * (a @ u0d + b @ u1d)
            return s, 0.5j * (a @ u1d), -0.5j * (b @ u0d)
        d = self.dimension
        flat = rho.reshape(rho.shape[:-2] + (d * d,))
        s = (flat @ self.g_sum.T).reshape(rho.shape)
        y01 = (flat @ self.g_01.T).reshape(rho.shape)
        y10 = (flat @ self.g_10.T).reshape(rho.shape)
        return s, y01, y10

    def outcome_states(self, rho: np.ndarray, phi):
        """Unnormalized conditional states ``(out_0, out_1)``; ``phi`` broadcasts over the batch."""
        s, y01, y10 = self.blocks(rho)
        phase = np.exp(-1j * np.asarray(phi, dtype=float))[..., None, None]
        cross = 0.5j * (phase * y01 - phase.conj() * y10)
        return 0.5 * s + cross, 0.5 * s - cross

    def block_superops(self) -> tuple:
        """Natural representations of ``rho -> S, Y_01, Y_10``."""
        if self.is_unitary:
            u0, u1 = self.u0, self.u1
            g_sum = 0.5 * (np.kron(u0, u0.conj()) + np.kron(u1, u1.conj()))
            return g_sum, 0.5j * np.kron(u0, u1.conj()), -0.5j * np.kron(u1, u0.conj())
        return self.g_sum, self.g_01, self.g_10

    def outcome_vectors(self, flat: np.ndarray, phi) -> tuple:
        """:meth:`outcome_states` on row-major vectorized states of shape ``(n, d^2)``.

        A scalar ``phi`` costs one product with the stacked outcome maps; an
        array of per-row phases uses the three block maps.
        """
        phi = np.asarray(phi, dtype=float)
        if phi.ndim == 0:
            key = float(phi)
            if getattr(self, "_fixed_phi", None) != key:
                m0, m1 = self._outcome_maps(key)
                self._fixed = np.concatenate([m0, m1], axis=0).T.copy()
                self._fixed_phi = key
            return tuple(np.split(flat @ self._fixed, 2, axis=-1))
        if not hasattr(self, "_stacked"):
            self._stacked = np.concatenate(self.block_superops(), axis=0).T.copy()
        s, y01, y10 = np.split(flat @ self._stacked, 3, axis=-1)
        phase = np.exp(-1j * phi)[:, None]
        cross = 0.5j * (phase * y01 - np.conj(phase) * y10)
        return 0.5 * s + cross, 0.5 * s - cross

    def _outcome_maps(self, phi: float) -> tuple:
        g_sum, g_01, g_10 = self.block_superops()
        e = np.exp(-1j * phi)
        cross = 0.5j * (e * g_01 - np.conj(e) * g_10)
        return 0.5 * g_sum + cross, 0.5 * g_sum - cross

    def kraus(self, phi: float) -> tuple:
        if not self.is_unitary:
            raise DomainError("dissipative evolution has no Kraus pair of rank one")
        e = np.exp(1j * phi)
        return (self.u0 - e * self.u1) / 2, (self.u0 + e * self.u1) / 2

    def outcome_superops(self, phi: float) -> tuple:
        """Natural representations of the two conditional maps."""
        if self.is_unitary:
            return tuple(np.kron(m, m.conj()) for m in self.kraus(phi))
        d = self.dimension
        basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
        out0, out1 = self.outcome_states(basis, phi)
        return out0.reshape(d * d, d * d).T, out1.reshape(d * d, d * d).T

    def superop(self) -> np.ndarray:
        m0, m1 = self.outcome_superops(0.0)
        return m0 + m1


def _noiseless_evolution(v: SpectralOperator, tau: float) -> CycleEvolution:
    proj = v.projectors
    u0 = np.einsum("k,kij->ij", np.exp(-1j * v.eigenvalues * tau), proj)
    u1 = np.einsum("k,kij->ij", np.exp(1j * v.eigenvalues * tau), proj)
    return CycleEvolution(tau, u0=u0, u1=u1)


def composite_hamiltonian(v: SpectralOperator, noise: NoiseSpec) -> np.ndarray:
    d = v.dimension
    h = np.kron(SIGMA_Z, v.dense())
    if noise.coherent is not None:
        h = h + np.kron(np.eye(2), noise.coherent)
    return algebra.hermitize(h)


def liouvillian(h: np.ndarray, jumps) -> np.ndarray:
    """Row-major Lindblad generator ``d|rho>>/dt = L |rho>>``."""
    n = h.shape[0]
    eye = np.eye(n)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in jumps:
        if rate == 0:
            continue
        ldl = op.conj().T @ op
        gen = gen + rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return gen


def build_evolution(
    v: SpectralOperator, noise: NoiseSpec | None, tau: float, cap: int = LIOUVILLIAN_CAP
) -> CycleEvolution:
    """Evolution for one window of length ``tau``.

    Noiseless: closed-form spectral propagators.  Coherent noise only: blocks of
    the composite ``exp(-i H tau)``.  Any positive Lindblad rate: the composite
    Liouvillian exponential, contracted with the ancilla preparation.
    """
    if noise is None or noise.is_trivial:
        return _noiseless_evolution(v, tau)
    d = v.dimension
    h = composite_hamiltonian(v, noise)
    if not noise.has_dissipation:
        u = algebra.expm_hermitian_propagator(h, tau)
        return CycleEvolution(tau, u0=u[:d, :d], u1=u[d:, d:])
    side = (2 * d) ** 2
    if side > cap:
        raise DimensionCapError(f"Liouvillian dimension {side} exceeds cap {cap}")
    jumps = [(np.kron(np.eye(2), op), rate) for op, rate in noise.lindblad]
    prop = algebra.expm_general(liouvillian(h, jumps) * tau)
    t = prop.reshape(2, d, 2, d, 2, d, 2, d)
    g = np.einsum("BIGJaibj,ab->BGIJij", t, ANCILLA_PREP).reshape(2, 2, d * d, d * d)
    return CycleEvolution(tau, g_sum=g[0, 0] + g[1, 1], g_01=g[0, 1], g_10=g[1, 0])


def noisy_rim_superop(
    v: SpectralOperator, noise: NoiseSpec, s: RimSettings, cap: int = LIOUVILLIAN_CAP
) -> np.ndarray:
    return build_evolution(v, noise, s.tau, cap).superop()


def choi_matrix(superop: np.ndarray) -> np.ndarray:
    """Reshuffle a row-major natural representation into its Choi matrix."""
    d = int(round(np.sqrt(superop.shape[0])))
    return superop.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def trace_preservation_error(superop: np.ndarray) -> float:
    d = int(round(np.sqrt(superop.shape[0])))
    ident = np.eye(d).reshape(-1)
    return float(np.max(np.abs(ident @ superop - ident)))


# ---------------------------------------------------------------------------
# spectra and metastability


@dataclass(frozen=True)
class ChannelSpectrum:
    eigenvalues: np.ndarray  # sorted by modulus, descending
    classes: tuple
    right: np.ndarray
    left: np.ndarray
    s_hint: int
    m_low: float
    m_high: float

    @property
    def window_empty(self) -> bool:
        return not self.m_low < self.m_high

    def count(self, kind: str) -> int:
        return sum(c == kind for c in self.classes)


def _window(mod: np.ndarray, s_hint: int, c: float, tol: float) -> tuple:
    def inv_log(x):
        if x >= 1.0 - tol:
            return np.inf
        if x <= 0.0:
            return 0.0
        return 1.0 / abs(np.log(x))

    lam_s = mod[s_hint - 1] if s_hint - 1 < mod.size else 0.0
    lam_next = mod[s_hint] if s_hint < mod.size else 0.0
    return c * inv_log(lam_next), inv_log(lam_s) / c


def channel_spectrum(
    superop, s_hint: int, separation: float = SEPARATION_FACTOR, tol: float = FIXED_TOL
) -> ChannelSpectrum:
    """Classify channel eigenvalues and bracket the metastable range of cycle counts.

    The window is ``(c / |ln|lam_{s+1}||, 1 / (c |ln|lam_s||))`` with eigenvalues
    ordered by modulus and ``c`` the separation factor standing in for "much less".
    """
    phi = algebra.as_matrix(superop)
    if phi.shape[0] != phi.shape[1]:
        raise DomainError("superoperator must be square")
    if s_hint < 1:
        raise DomainError("s_hint must be positive")
    if algebra.is_hermitian(phi, 1e-13):
        dec = algebra.eig_hermitian(phi, 1e-13)
        vals = dec.eigenvalues.astype(complex)
    else:
        dec = algebra.eig_general(phi)
        vals = dec.eigenvalues
    order = np.lexsort((-vals.real, -np.round(np.abs(vals), 12)))
    vals = vals[order]
    right, left = dec.right[:, order], dec.left[:, order]
    mod = np.abs(vals)
    classes = []
    for i, lam in enumerate(vals):
        if abs(lam - 1) <= tol:
            classes.append("fixed")
        elif mod[i] >= 1 - tol:
            classes.append("rotating")
        elif i < s_hint:
            classes.append("metastable")
        else:
            classes.append("decaying")
    m_low, m_high = _window(mod, s_hint, separation, tol)
    return ChannelSpectrum(vals, tuple(classes), right, left, s_hint, m_low, m_high)
