"""Target-system operators: spectral operators, the spin-star model, noise
specifications and CPMG dynamical-decoupling filters."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from . import algebra
from .errors import DomainError, NotHermitianError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |0><1| raises, |1><0| lowers, with sigma_z|0> = |0>
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

DEGENERACY_RTOL = 1e-9


def _kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, ops, np.ones((1, 1), dtype=complex))


def embed(op: np.ndarray, site: int, n_qubits: int) -> np.ndarray:
    """Single-qubit ``op`` acting on ``site`` (0 = most significant)."""
    ops = [IDENTITY_2] * n_qubits
    ops[site] = op
    return _kron_all(ops)


@dataclass(frozen=True)
class SpectralOperator:
    """Hermitian operator stored as distinct eigenvalues and eigenspaces.

    ``bases[k]`` is a ``d x rank_k`` orthonormal basis of the k-th eigenspace;
    projectors are derived from it.  Eigenvalues are ascending.
    """

    eigenvalues: np.ndarray
    bases: tuple

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))
        if len(self.bases) != self.eigenvalues.size:
            raise ValueError("one basis per eigenvalue required")

    @classmethod
    def from_eigen(cls, eigenvalues, bases) -> "SpectralOperator":
        vals = np.asarray(eigenvalues, dtype=float)
        order = np.argsort(vals, kind="stable")
        return cls(vals[order], tuple(np.asarray(bases[i], dtype=complex) for i in order))

    @classmethod
    def diagonal(cls, values) -> "SpectralOperator":
        """Operator diagonal in the computational basis (values grouped exactly)."""
        values = np.asarray(values, dtype=float)
        d = values.size
        eye = np.eye(d, dtype=complex)
        distinct = np.unique(values)
        bases = [eye[:, values == v] for v in distinct]
        return cls(distinct, tuple(bases))

    @property
    def dimension(self) -> int:
        return self.bases[0].shape[0]

    @property
    def n_distinct(self) -> int:
        return self.eigenvalues.size

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def projectors(self) -> np.ndarray:
        return np.stack([b @ b.conj().T for b in self.bases])

    @property
    def ranks(self) -> np.ndarray:
        return np.array([b.shape[1] for b in self.bases])

    @property
    def representatives(self) -> np.ndarray:
        """First basis vector of every eigenspace, as columns."""
        return np.stack([b[:, 0] for b in self.bases], axis=1)

    def dense(self) -> np.ndarray:
        return algebra.hermitize(np.einsum("k,kij->ij", self.eigenvalues, self.projectors))

    def weights(self, rho: np.ndarray) -> np.ndarray:
        """Populations ``Tr(P_k rho)``."""
        return np.real(np.einsum("kij,ji->k", self.projectors, rho))


def spectral_from_dense(h, tol: float | None = None) -> SpectralOperator:
    """Group the eigenvalues of Hermitian ``h`` into distinct eigenspaces.

    Consecutive ascending eigenvalues closer than ``tol`` (default
    ``1e-9 * ||h||``) share an eigenspace; the group value is their mean.
    """
    m = algebra.as_matrix(h)
    if not algebra.is_hermitian(m):
        raise NotHermitianError("operator is not Hermitian")
    dec = algebra.eig_hermitian(m)
    w = dec.eigenvalues
    if tol is None:
        scale = np.max(np.abs(w)) if w.size else 0.0
        tol = DEGENERACY_RTOL * scale if scale > 0 else 1e-12
    groups = [[0]]
    for i in range(1, w.size):
        if w[i] - w[i - 1] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = [float(np.mean(w[g])) for g in groups]
    bases = [dec.right[:, g] for g in groups]
    return SpectralOperator(np.array(values), tuple(bases))


@dataclass(frozen=True)
class SpinStarParams:
    couplings: tuple
    axes: tuple

    def __post_init__(self):
        a = tuple(float(x) for x in self.couplings)
        n = tuple(tuple(float(c) for c in ax) for ax in self.axes)
        if len(a) < 1 or len(a) != len(n):
            raise DomainError("need K >= 1 couplings with one axis each")
        for ax in n:
            if len(ax) != 3 or abs(np.linalg.norm(ax) - 1.0) > 1e-12:
                raise DomainError(f"axis {ax} is not a unit 3-vector")
        object.__setattr__(self, "couplings", a)
        object.__setattr__(self, "axes", n)

    @classmethod
    def normalized(cls, couplings, axes) -> "SpinStarParams":
        """Build from axes that are only approximately unit length."""
        unit = [tuple(np.asarray(ax, float) / np.linalg.norm(ax)) for ax in axes]
        return cls(tuple(couplings), tuple(unit))

    @classmethod
    def along_z(cls, couplings) -> "SpinStarParams":
        return cls(tuple(couplings), tuple((0.0, 0.0, 1.0) for _ in couplings))

    @property
    def n_qubits(self) -> int:
        return len(self.couplings)


def _sigma_dot(axis) -> np.ndarray:
    return axis[0] * SIGMA_X + axis[1] * SIGMA_Y + axis[2] * SIGMA_Z


def spin_star_dense(p: SpinStarParams, shifted: bool = True) -> np.ndarray:
    """``sum_j (A_j/4)(sigma_j . n_j [+ 1])`` as a dense matrix."""
    k = p.n_qubits
    out = np.zeros((2**k, 2**k), dtype=complex)
    for j, (a, axis) in enumerate(zip(p.couplings, p.axes)):
        local = _sigma_dot(axis) + (IDENTITY_2 if shifted else 0)
        out += (a / 4) * embed(local, j, k)
    return algebra.hermitize(out)


def build_spin_star(p: SpinStarParams, shifted: bool = True) -> SpectralOperator:
    """Spin-star coupling operator with its exact product eigenbasis.

    Shifted spectrum: ``sum_j eta_j A_j / 2`` with ``eta_j in {0, 1}``.
    Unshifted: ``sum_j s_j A_j / 4`` with ``s_j in {-1, +1}``.
    """
    k = p.n_qubits
    local_vecs = []
    for axis in p.axes:
        _, vecs = np.linalg.eigh(_sigma_dot(axis))
        local_vecs.append((vecs[:, 0], vecs[:, 1]))  # (-1, +1) eigenvectors of sigma.n
    entries = []
    for eta in itertools.product((0, 1), repeat=k):
        if shifted:
            value = sum(e * a / 2 for e, a in zip(eta, p.couplings))
        else:
            value = sum((2 * e - 1) * a / 4 for e, a in zip(eta, p.couplings))
        vec = _kron_all([local_vecs[j][e].reshape(-1, 1) for j, e in enumerate(eta)]).reshape(-1)
        entries.append((value, vec))
    entries.sort(key=lambda x: x[0])
    scale = max(abs(v) for v, _ in entries)
    tol = DEGENERACY_RTOL * scale if scale > 0 else 1e-12
    groups: list[list] = []
    for value, vec in entries:
        if groups and value - groups[-1][-1][0] <= tol:
            groups[-1].append((value, vec))
        else:
            groups.append([(value, vec)])
    values = np.array([g[0][0] for g in groups])
    bases = tuple(np.stack([v for _, v in g], axis=1) for g in groups)
    return SpectralOperator(values, bases)


def build_coherent_noise(omegas: Sequence[float]) -> np.ndarray:
    """``C = sum_j omega_j (sigma_j^z + 1)/2``, diagonal in the computational basis."""
    k = len(omegas)
    diag = np.zeros(2**k)
    for idx in range(2**k):
        bits = [(idx >> (k - 1 - j)) & 1 for j in range(k)]
        diag[idx] = sum(w for w, b in zip(omegas, bits) if b == 0)
    return np.diag(diag).astype(complex)


def omegas_for_gamma(p: SpinStarParams, gamma: float, v_norm: float) -> list[float]:
    """Per-qubit frequencies ``omega_j ~ A_j`` giving ``||C|| = gamma ||V||``."""
    total = sum(abs(a) for a in p.couplings)
    return [gamma * v_norm * abs(a) / total for a in p.couplings]


@dataclass(frozen=True)
class NoiseSpec:
    """Target-system noise: a coherent Hamiltonian term and Lindblad channels."""

    coherent: np.ndarray | None = None
    lindblad: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.coherent is not None:
            c = algebra.as_matrix(self.coherent)
            if not algebra.is_hermitian(c):
                raise NotHermitianError("coherent noise operator must be Hermitian")
            object.__setattr__(self, "coherent", algebra.hermitize(c))
        ops = []
        for op, rate in self.lindblad:
            if rate < 0:
                raise DomainError(f"Lindblad rate must be non-negative, got {rate}")
            ops.append((algebra.as_matrix(op), float(rate)))
        object.__setattr__(self, "lindblad", tuple(ops))

    @property
    def is_trivial(self) -> bool:
        no_c = self.coherent is None or not np.any(self.coherent)
        no_l = all(rate == 0 for _, rate in self.lindblad)
        return no_c and no_l

    @property
    def has_dissipation(self) -> bool:
        return any(rate > 0 for _, rate in self.lindblad)

    def relative_strength(self, v: SpectralOperator) -> float:
        if self.coherent is None:
            return 0.0
        return float(np.linalg.norm(self.coherent, 2) / v.norm)


def single_qubit_lindblad(kind: str, rates: Sequence[float]) -> tuple:
    """One jump operator per qubit: ``z`` (dephasing), ``minus`` or ``plus``."""
    ops = {"z": SIGMA_Z, "minus": SIGMA_MINUS, "plus": SIGMA_PLUS}
    if kind not in ops:
        raise DomainError(f"unknown jump kind {kind!r}")
    k = len(rates)
    return tuple((embed(ops[kind], j, k), float(r)) for j, r in enumerate(rates))


@dataclass(frozen=True)
class CpmgSequence:
    n_pulses: int
    half_period: float

    def __post_init__(self):
        if self.n_pulses < 1 or self.half_period <= 0:
            raise DomainError("CPMG needs N >= 1 and a positive half period")

    @classmethod
    def resonant(cls, n_pulses: int, omega: float) -> "CpmgSequence":
        """Half period with ``2 tau_p = pi / omega``."""
        return cls(n_pulses, np.pi / (2 * omega))

    @property
    def total_time(self) -> float:
        return 2 * self.n_pulses * self.half_period

    @property
    def pulse_times(self) -> np.ndarray:
        return (2 * np.arange(1, self.n_pulses + 1) - 1) * self.half_period

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], self.pulse_times, [self.total_time]])


def cpmg_modulation(seq: CpmgSequence, t: float) -> int:
    if t < 0 or t > seq.total_time:
        raise DomainError(f"t={t} outside [0, {seq.total_time}]")
    flips = int(np.searchsorted(seq.pulse_times, t, side="right"))
    return -1 if flips % 2 else 1


def cpmg_filter(seq: CpmgSequence, omega: float) -> complex:
    """``F(omega) = int_0^T f(t) exp(i omega t) dt`` summed over the sign intervals."""
    b = seq.boundaries()
    start, length = b[:-1], np.diff(b)
    signs = (-1.0) ** np.arange(length.size)
    # (e^{i w L} - 1)/(i w) = L e^{i w L/2} sinc(w L / 2 pi), finite for every w
    pieces = length * np.exp(1j * omega * (start + length / 2)) * np.sinc(omega * length / (2 * np.pi))
    return complex(np.sum(signs * pieces))


def perpendicular_couplings(p: SpinStarParams) -> np.ndarray:
    """Magnitudes of the coupling fields transverse to the z axis."""
    return np.array([a * np.hypot(ax[0], ax[1]) for a, ax in zip(p.couplings, p.axes)])


def cpmg_effective_generator(p: SpinStarParams, seq: CpmgSequence, omega: float) -> np.ndarray:
    """First-order Magnus generator ``W`` of the decoupled coupling.

    With Zeeman term ``(omega/2) sum_j sigma_j^z`` the coupling's ``e^{i omega t}``
    component is ``V_j(omega) = (A_j/4)(n^x - i n^y) sigma_j^+``; the filter keeps
    ``W = sum_j F V_j(omega) + h.c.``, a transverse field of size
    ``|F| A_j^perp / 4`` on each spin.
    """
    f = cpmg_filter(seq, omega)
    k = p.n_qubits
    w = np.zeros((2**k, 2**k), dtype=complex)
    for j, (a, ax) in enumerate(zip(p.couplings, p.axes)):
        v_plus = (a / 4) * (ax[0] - 1j * ax[1]) * SIGMA_PLUS
        local = f * v_plus
        w += embed(local + local.conj().T, j, k)
    return algebra.hermitize(w)


def zeeman_hamiltonian(n_qubits: int, omega: float) -> np.ndarray:
    return sum((omega / 2) * embed(SIGMA_Z, j, n_qubits) for j in range(n_qubits))


def cpmg_effective_unitary(p: SpinStarParams, seq: CpmgSequence, omega: float) -> np.ndarray:
    """Approximate target propagator for the ancilla-|0> branch over one CPMG block.

    Includes the lab-frame Zeeman rotation over the block, which is the identity
    when ``N`` is a multiple of four at resonance.
    """
    w = cpmg_effective_generator(p, seq, omega)
    frame = algebra.expm_hermitian_propagator(zeeman_hamiltonian(p.n_qubits, omega), seq.total_time)
    return frame @ algebra.expm_hermitian_propagator(w, 1.0)
