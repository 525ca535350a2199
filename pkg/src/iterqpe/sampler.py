"""Monte Carlo trajectories of sequential Ramsey measurements.

Every sample ``j`` draws its uniforms from its own counter-based stream
(Philox keyed by ``SeedSequence(seed, spawn_key=(j,))``), so a batch is
bit-identical however it is split between workers.  States are tracked as
target density matrices, batched across samples.

Adaptive bit order: the outcome ``a_i`` of round ``i`` is the ``(m-i+1)``-th
fractional binary digit of ``a = 0.a_m ... a_2 a_1``.  For ``m = 3`` and
outcomes ``(a_1, a_2, a_3) = (1, 0, 1)`` the statistic is ``0.101 = 5/8``; the
round-3 phase was ``pi - 2 pi * 0.0 a_2 a_1 = pi - 2 pi * 0.001 = 3 pi / 4``.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import algebra
from .analysis import DistributionTable, OutcomeHistogram
from .channel import LIOUVILLIAN_CAP, KrausPair, RimSettings, build_evolution
from .errors import DomainError, ImpossibleTrajectoryError
from .model import NoiseSpec, SpectralOperator

MIN_BRANCH_PROBABILITY = 1e-300
MAX_ENUMERATION_ROUNDS = 12


@dataclass(frozen=True)
class InitialState:
    """``kind`` is one of ``equal_superposition_of_eigenstates``,
    ``maximally_mixed``, ``eigenstate`` (needs ``index``) or ``custom``
    (needs ``matrix``).

    The equal superposition uses the first basis vector of every eigenspace,
    so for degenerate spectra it is one particular, deterministic choice.
    """

    kind: str = "equal_superposition_of_eigenstates"
    matrix: np.ndarray | None = None
    index: int | None = None

    def density(self, v: SpectralOperator) -> np.ndarray:
        d = v.dimension
        if self.kind in ("equal_superposition_of_eigenstates", "equal_superposition"):
            psi = v.representatives.sum(axis=1)
            psi = psi / np.linalg.norm(psi)
            return np.outer(psi, psi.conj())
        if self.kind == "maximally_mixed":
            return np.eye(d, dtype=complex) / d
        if self.kind == "eigenstate":
            if self.index is None or not 0 <= self.index < v.n_distinct:
                raise DomainError(f"eigenstate index {self.index} out of range")
            psi = v.representatives[:, self.index]
            return np.outer(psi, psi.conj())
        if self.kind == "custom":
            return validate_density(self.matrix, d)
        raise DomainError(f"unknown initial state kind {self.kind!r}")


def validate_density(rho, d: int | None = None, tol: float = 1e-10) -> np.ndarray:
    m = algebra.as_matrix(rho)
    if d is not None and m.shape != (d, d):
        raise DomainError(f"density matrix must be {d}x{d}, got {m.shape}")
    if not algebra.is_hermitian(m, tol):
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(m).real - 1) > tol:
        raise DomainError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(algebra.hermitize(m)).min() < -tol:
        raise DomainError("density matrix is not positive semidefinite")
    return algebra.hermitize(m)


@dataclass(frozen=True)
class RepetitiveScheme:
    settings: RimSettings
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("need at least one cycle")

    @property
    def total_time(self) -> float:
        return self.m * self.settings.tau


@dataclass(frozen=True)
class AdaptivePlan:
    """``tau_i = 2^{m-i} pi / tau0`` with feedback phases ``phi_i = pi - 2 pi 0.0a_{i-1}...a_1``.

    ``tau0`` is the scale in the evolution times.  For spectra of either sign the
    time scale should be twice a bound on ``||V||``; see :meth:`signed`.
    """

    m: int
    tau0: float

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("need at least one round")
        if not self.tau0 > 0:
            raise DomainError("tau0 must be positive")

    @classmethod
    def signed(cls, m: int, bound: float) -> "AdaptivePlan":
        return cls(m, 2 * bound)

    @property
    def taus(self) -> np.ndarray:
        return np.array([2.0 ** (self.m - i) * np.pi / self.tau0 for i in range(1, self.m + 1)])

    @property
    def total_time(self) -> float:
        return (2**self.m - 1) * np.pi / self.tau0

    @staticmethod
    def phase(round_index: int, history):
        """Phase of round ``i`` (1-based) given ``J = sum_{j<i} a_j 2^{j-1}``."""
        return np.pi - 2 * np.pi * np.asarray(history, dtype=float) / 2.0**round_index


@dataclass(frozen=True)
class TrajectoryRecord:
    bits: tuple
    statistic: float
    log_probability: float
    final_state: np.ndarray | None = None

    @property
    def probability(self) -> float:
        return float(np.exp(self.log_probability))


@dataclass(frozen=True)
class SampleBatch:
    scheme: str
    bits: np.ndarray  # (n, m) uint8, measurement order
    statistic: np.ndarray
    log_probability: np.ndarray
    seed: int
    fingerprint: str
    final_states: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.bits.shape[0]

    @property
    def m(self) -> int:
        return self.bits.shape[1]

    def record(self, j: int) -> TrajectoryRecord:
        state = None if self.final_states is None else self.final_states[j]
        return TrajectoryRecord(
            tuple(int(b) for b in self.bits[j]),
            float(self.statistic[j]),
            float(self.log_probability[j]),
            state,
        )

    @property
    def records(self) -> list:
        return [self.record(j) for j in range(self.n_samples)]

    def histogram(self) -> OutcomeHistogram:
        n, m = self.bits.shape
        if self.scheme == "repetitive":
            idx = m - self.bits.sum(axis=1).astype(int)
            grid = np.arange(m + 1) / m
        else:
            idx = self.bits.astype(np.int64) @ (2 ** np.arange(m, dtype=np.int64))
            grid = np.arange(2**m) / 2**m
        counts = np.bincount(idx, minlength=grid.size)
        return OutcomeHistogram(self.scheme, grid, counts, n)


def rim_cycle_update(rho, kp: KrausPair, u: float):
    """One measurement: outcome 0 iff ``u < p_0``.  Returns ``(bit, rho', p_bit)``."""
    outs = [m @ rho @ m.conj().T for m in kp.operators]
    p0 = float(np.real(np.trace(outs[0])))
    bit = 0 if u < p0 else 1
    p = p0 if bit == 0 else float(np.real(np.trace(outs[1])))
    if p < MIN_BRANCH_PROBABILITY:
        raise ImpossibleTrajectoryError(f"selected outcome has probability {p:.3g}")
    return bit, algebra.hermitize(outs[bit] / p), p


def sample_uniforms(seed: int, indices: Sequence[int], m: int) -> np.ndarray:
    out = np.empty((len(indices), m))
    for row, j in enumerate(indices):
        ss = np.random.SeedSequence(seed, spawn_key=(int(j),))
        out[row] = np.random.Generator(np.random.Philox(ss)).random(m)
    return out


def model_fingerprint(v: SpectralOperator, noise: NoiseSpec | None, scheme) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(v.eigenvalues).tobytes())
    h.update(np.ascontiguousarray(v.projectors).tobytes())
    if noise is not None:
        if noise.coherent is not None:
            h.update(np.ascontiguousarray(noise.coherent).tobytes())
        for op, rate in noise.lindblad:
            h.update(np.ascontiguousarray(op).tobytes())
            h.update(repr(rate).encode())
    h.update(repr(scheme).encode())
    return h.hexdigest()[:16]


def _round_setup(v, noise, scheme, cap):
    """Per-round evolutions (deduplicated by tau) and the adaptive flag."""
    if isinstance(scheme, RepetitiveScheme):
        ev = build_evolution(v, noise, scheme.settings.tau, cap)
        return [ev] * scheme.m, False
    cache = {}
    evs = []
    for tau in scheme.taus:
        if tau not in cache:
            cache[tau] = build_evolution(v, noise, tau, cap)
        evs.append(cache[tau])
    return evs, True


def _round_phase(scheme, i: int, history: np.ndarray):
    if isinstance(scheme, RepetitiveScheme):
        return scheme.settings.phi
    return AdaptivePlan.phase(i, history)


def _simulate_block(evolutions, scheme, rho0, uniforms, keep_states):
    n, m = uniforms.shape
    d = rho0.shape[0]
    diag = np.arange(d) * (d + 1)
    flat = np.broadcast_to(rho0.reshape(-1), (n, d * d)).copy()
    bits = np.zeros((n, m), dtype=np.uint8)
    logp = np.zeros(n)
    history = np.zeros(n, dtype=np.int64)
    for i, ev in enumerate(evolutions, start=1):
        out0, out1 = ev.outcome_vectors(flat, _round_phase(scheme, i, history))
        p0 = out0[:, diag].real.sum(axis=1)
        p1 = out1[:, diag].real.sum(axis=1)
        one = uniforms[:, i - 1] >= p0
        p = np.where(one, p1, p0)
        if np.any(p < MIN_BRANCH_PROBABILITY):
            raise ImpossibleTrajectoryError("a sampled outcome has vanishing probability")
        flat = np.where(one[:, None], out1, out0) / p[:, None]
        bits[:, i - 1] = one
        logp += np.log(p)
        history += one.astype(np.int64) << (i - 1)
    states = algebra.hermitize(flat.reshape(n, d, d)) if keep_states else None
    return bits, logp, states


def _worker(args):
    evolutions, scheme, rho0, seed, indices, keep_states = args
    u = sample_uniforms(seed, indices, len(evolutions))
    return _simulate_block(evolutions, scheme, rho0, u, keep_states)


def _statistic(scheme, bits: np.ndarray) -> np.ndarray:
    m = bits.shape[1]
    if isinstance(scheme, RepetitiveScheme):
        return (m - bits.sum(axis=1)) / m
    return (bits.astype(np.int64) @ (2 ** np.arange(m, dtype=np.int64))) / 2.0**m


def run_scheme(
    v: SpectralOperator,
    noise: NoiseSpec | None,
    scheme,
    n_samples: int,
    init: InitialState,
    seed: int,
    *,
    keep_states: bool = False,
    workers: int = 1,
    cap: int = LIOUVILLIAN_CAP,
) -> SampleBatch:
    if n_samples < 0:
        raise DomainError("n_samples must be non-negative")
    rho0 = init.density(v)
    evolutions, adaptive = _round_setup(v, noise, scheme, cap)
    m = len(evolutions)
    blocks = np.array_split(np.arange(n_samples), max(1, min(workers, n_samples or 1)))
    jobs = [(evolutions, scheme, rho0, seed, idx, keep_states) for idx in blocks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_worker, jobs))
    else:
        parts = [_worker(job) for job in jobs]
    bits = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, m), np.uint8)
    logp = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    states = np.concatenate([p[2] for p in parts]) if keep_states and parts else None
    bits = bits.reshape(n_samples, m)
    return SampleBatch(
        "adaptive" if adaptive else "repetitive",
        bits,
        _statistic(scheme, bits),
        logp.reshape(n_samples),
        seed,
        model_fingerprint(v, noise, scheme),
        states,
    )


def sample_repetitive(v, noise, settings: RimSettings, m: int, n_samples: int, init, seed, **kw):
    return run_scheme(v, noise, RepetitiveScheme(settings, m), n_samples, init, seed, **kw)


def sample_adaptive(v, noise, plan: AdaptivePlan, n_samples: int, init, seed, **kw):
    return run_scheme(v, noise, plan, n_samples, init, seed, **kw)


def enumerate_trajectories(
    v: SpectralOperator,
    noise: NoiseSpec | None,
    scheme,
    rho0,
    *,
    return_strings: bool = False,
    cap: int = LIOUVILLIAN_CAP,
):
    """Exact outcome distribution by summing all ``2^m`` unnormalized branches.

    Returns a :class:`DistributionTable` over the scheme's statistic and, with
    ``return_strings``, also the per-string probabilities indexed by
    ``sum_i a_i 2^{i-1}``.
    """
    evolutions, adaptive = _round_setup(v, noise, scheme, cap)
    m = len(evolutions)
    if m > MAX_ENUMERATION_ROUNDS:
        raise DomainError(f"m={m} exceeds the enumeration limit {MAX_ENUMERATION_ROUNDS}")
    branches = np.asarray(rho0, dtype=complex)[None]
    history = np.zeros(1, dtype=np.int64)
    for i, ev in enumerate(evolutions, start=1):
        out0, out1 = ev.outcome_states(branches, _round_phase(scheme, i, history))
        branches = np.concatenate([out0, out1])
        history = np.concatenate([history, history + (1 << (i - 1))])
    probs = np.real(np.trace(branches, axis1=1, axis2=2))
    # branch order above equals the string index sum_i a_i 2^{i-1}
    strings = np.zeros(2**m)
    strings[history] = probs
    if adaptive:
        grid = np.arange(2**m) / 2**m
        table = DistributionTable("adaptive", grid, strings.copy())
    else:
        ones = np.array([bin(j).count("1") for j in range(2**m)])
        dist = np.bincount(m - ones, weights=strings, minlength=m + 1)
        table = DistributionTable("repetitive", np.arange(m + 1) / m, dist)
    return (table, strings) if return_strings else table


def default_workers() -> int:
    return os.cpu_count() or 1
