import numpy as np
import pytest
from conftest import (
    TAU,
    TILTED_AXIS,
    coherent_noise,
    random_density,
    random_spectral,
    two_qubit_params,
)
from hypothesis import given
from hypothesis import strategies as st
from oracles import natural, stinespring_kraus

from iterqpe.channel import (
    RimSettings,
    asymptotic_projector,
    build_evolution,
    build_rim_kraus,
    channel_spectrum,
    choi_matrix,
    compose_sequence,
    natural_rep,
    natural_rep_closed_form,
    noisy_rim_superop,
    outcome0_probabilities,
    trace_preservation_error,
)
from iterqpe.errors import DegenerateChannelError, DimensionCapError, DomainError
from iterqpe.model import NoiseSpec, SpectralOperator, single_qubit_lindblad

seeds = st.integers(0, 2**32 - 1)


def test_settings_validation():
    with pytest.raises(DomainError):
        RimSettings(0.0, 0.1)


def test_kraus_edge_probabilities():
    v = SpectralOperator.diagonal([0.0, 0.25])
    kp = build_rim_kraus(v, RimSettings(1.0, 0.0))
    assert abs(kp.lambdas[0, 0]) <= 1e-15 and np.isclose(abs(kp.lambdas[1, 0]), 1)
    tau = 0.5
    v = SpectralOperator.diagonal([np.pi / 4 / tau])
    p0 = outcome0_probabilities(v, RimSettings(tau, np.pi / 2))
    assert np.isclose(p0[0], 1.0)


@given(seeds, st.integers(1, 4), st.floats(0.05, 3.0), st.floats(0, 2 * np.pi))
def test_kraus_invariants(seed, d, tau, phi):
    r = np.random.default_rng(seed)
    v = random_spectral(r, d, s=int(r.integers(1, d + 1)), low=-2, high=2)
    s = RimSettings(tau, phi)
    kp = build_rim_kraus(v, s)
    assert kp.completeness_error() <= 1e-12
    assert np.allclose(np.linalg.norm(kp.lambdas, axis=0), 1, atol=1e-12)
    assert np.all(np.abs(kp.lambdas) <= 1 + 1e-9)
    assert np.allclose(np.abs(kp.lambdas[0]) ** 2, outcome0_probabilities(v, s), atol=1e-12)
    # commuting normal pair
    assert np.max(np.abs(kp.m0 @ kp.m1 - kp.m1 @ kp.m0)) <= 1e-12
    assert np.max(np.abs(kp.m0 @ kp.m0.conj().T - kp.m0.conj().T @ kp.m0)) <= 1e-12


@given(seeds, st.floats(0.05, 3.0), st.floats(0, 2 * np.pi))
def test_kraus_equals_circuit_up_to_phase(seed, tau, phi):
    v = random_spectral(np.random.default_rng(seed), 3, low=-2, high=2)
    kp = build_rim_kraus(v, RimSettings(tau, phi))
    for mine, ref in zip(kp.operators, stinespring_kraus(v.dense(), tau, phi)):
        i = np.unravel_index(np.argmax(np.abs(ref)), ref.shape)
        phase = mine[i] / ref[i]
        assert np.isclose(abs(phase), 1, atol=1e-12)
        assert np.max(np.abs(mine - phase * ref)) <= 1e-12


def test_natural_rep_basics(rng):
    v = SpectralOperator.diagonal([0.3])
    assert np.allclose(natural_rep(build_rim_kraus(v, RimSettings(1.0))), [[1.0]])
    v = random_spectral(rng, 4, low=-1, high=1)
    s = RimSettings(0.7, 1.1)
    phi_hat = natural_rep(build_rim_kraus(v, s))
    assert np.max(np.abs(phi_hat - natural_rep_closed_form(v, s))) <= 1e-12
    for p in v.projectors:
        assert np.allclose(phi_hat @ p.reshape(-1), p.reshape(-1), atol=1e-12)
    assert trace_preservation_error(phi_hat) <= 1e-12


@given(seeds, st.integers(1, 6))
def test_compose_sequence_vs_products(seed, length):
    r = np.random.default_rng(seed)
    v = random_spectral(r, 4, low=-2, high=2)
    settings = [RimSettings(r.uniform(0.05, 2), r.uniform(0, 2 * np.pi)) for _ in range(length)]
    brute = np.eye(16, dtype=complex)
    for s in settings:
        kp = build_rim_kraus(v, s)
        brute = (natural(kp.m0) + natural(kp.m1)) @ brute
    closed = compose_sequence(v, settings)
    assert np.max(np.abs(closed - brute)) <= 1e-10
    shifted = [RimSettings(s.tau, s.phi + 1.3) for s in settings]
    assert np.max(np.abs(compose_sequence(v, shifted) - closed)) <= 1e-12
    for p in v.projectors:
        assert np.allclose(closed @ p.reshape(-1), p.reshape(-1), atol=1e-12)


def test_compose_single_cycle_and_empty(rng):
    v = random_spectral(rng, 3)
    s = RimSettings(0.4, 0.2)
    assert np.allclose(compose_sequence(v, [s]), natural_rep(build_rim_kraus(v, s)), atol=1e-12)
    with pytest.raises(DomainError):
        compose_sequence(v, [])


def test_asymptotic_projector(rng):
    v = random_spectral(rng, 3, low=0, high=1)
    s = RimSettings(0.9, np.pi / 2)
    proj = asymptotic_projector(v, s)
    assert np.linalg.matrix_rank(proj, tol=1e-9) == 3
    rho = random_density(rng, 3)
    expect = sum(p @ rho @ p for p in v.projectors)
    assert np.allclose(proj @ rho.reshape(-1), expect.reshape(-1), atol=1e-12)
    # power iteration reaches the projector at the subdominant rate
    phi_hat = natural_rep(build_rim_kraus(v, s))
    mods = np.sort(np.abs(np.linalg.eigvals(phi_hat)))[::-1]
    sub = mods[3]
    eps = 1e-6
    m = int(np.ceil(np.log(1 / eps) / abs(np.log(sub))))
    assert np.linalg.norm(np.linalg.matrix_power(phi_hat, m) - proj, 2) <= 1.01 * eps


def test_asymptotic_projector_flags_parallel_vectors():
    tau = 0.5
    v = SpectralOperator.diagonal([0.0, np.pi / tau])
    with pytest.raises(DegenerateChannelError):
        asymptotic_projector(v, RimSettings(tau, 0.3))


def test_noisy_superop_reduces_to_noiseless(rng):
    v = random_spectral(rng, 4, low=0, high=2)
    s = RimSettings(0.3, 0.8)
    ref = natural_rep(build_rim_kraus(v, s))
    assert np.max(np.abs(noisy_rim_superop(v, NoiseSpec(), s) - ref)) <= 1e-10
    assert np.max(np.abs(noisy_rim_superop(v, NoiseSpec(coherent=np.zeros((4, 4))), s) - ref)) <= 1e-10


@given(seeds, st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_noisy_superop_is_cptp(seed, rate, gamma):
    r = np.random.default_rng(seed)
    v = random_spectral(r, 2, low=0, high=2)
    c = np.diag(r.uniform(0, gamma, size=2))
    jumps = single_qubit_lindblad("minus", [rate]) + single_qubit_lindblad("z", [rate / 2])
    sup = noisy_rim_superop(v, NoiseSpec(coherent=c, lindblad=jumps), RimSettings(0.5, 1.0))
    assert trace_preservation_error(sup) <= 1e-9
    assert np.linalg.eigvalsh((choi_matrix(sup) + choi_matrix(sup).conj().T) / 2).min() >= -1e-9


def test_commuting_dephasing_keeps_fixed_blocks():
    v = SpectralOperator.diagonal([0.0, 0.6, 1.3, 1.9])
    jumps = single_qubit_lindblad("z", [0.1, 0.05])
    sup = noisy_rim_superop(v, NoiseSpec(lindblad=jumps), RimSettings(0.4, 0.7))
    for p in v.projectors:
        assert np.allclose(sup @ p.reshape(-1), p.reshape(-1), atol=1e-12)


def test_evolution_paths_agree(rng):
    v = random_spectral(rng, 2, low=0, high=2)
    noise = NoiseSpec(coherent=np.diag([0.1, 0.0]), lindblad=single_qubit_lindblad("z", [0.05]))
    ev = build_evolution(v, noise, 0.7)
    assert not ev.is_unitary
    rho = random_density(rng, 2)
    phis = np.array([0.3, 2.0])
    states = np.stack([rho, rho])
    out0, out1 = ev.outcome_states(states, phis)
    flat0, flat1 = ev.outcome_vectors(states.reshape(2, 4), phis)
    assert np.allclose(out0.reshape(2, 4), flat0) and np.allclose(out1.reshape(2, 4), flat1)
    scalar0, _ = ev.outcome_vectors(rho.reshape(1, 4), 0.3)
    assert np.allclose(scalar0[0], flat0[0])
    sup0, sup1 = ev.outcome_superops(0.3)
    assert np.allclose(sup0 @ rho.reshape(-1), flat0[0])
    # the unitary path through its block maps equals the Kraus path
    uni = build_evolution(v, NoiseSpec(coherent=np.diag([0.1, 0.0])), 0.7)
    k0, _ = uni.kraus(0.3)
    g0, _ = uni.outcome_vectors(rho.reshape(1, 4), np.array([0.3]))
    assert np.allclose(g0[0], (k0 @ rho @ k0.conj().T).reshape(-1), atol=1e-12)


def test_liouvillian_cap():
    v = SpectralOperator.diagonal([0.0, 1.0, 2.0, 3.0])
    noise = NoiseSpec(lindblad=single_qubit_lindblad("z", [0.1, 0.1]))
    with pytest.raises(DimensionCapError):
        build_evolution(v, noise, 0.2, cap=32)


def test_spectrum_noiseless(rng):
    v = random_spectral(rng, 3, low=0, high=1)
    sp = channel_spectrum(natural_rep(build_rim_kraus(v, RimSettings(0.8))), 3)
    assert sp.count("fixed") == 3
    assert np.allclose(sp.eigenvalues[:3], 1, atol=1e-10)
    assert np.isinf(sp.m_high) and not sp.window_empty


def test_spectrum_toy_window():
    sp = channel_spectrum(np.diag([1.0, 0.99, 0.5]), 2)
    assert np.isclose(sp.m_low, 10 / abs(np.log(0.5)))
    assert np.isclose(sp.m_high, 1 / (10 * abs(np.log(0.99))))
    assert np.isclose(sp.m_low, 14.43, atol=0.01) and np.isclose(sp.m_high, 9.95, atol=0.01)
    assert sp.window_empty
    assert sp.classes == ("fixed", "metastable", "decaying")


def test_spectrum_coherent_noise_windows():
    p = two_qubit_params(TILTED_AXIS)
    highs = []
    for gamma in (0.02, 0.03, 0.05):
        v, noise = coherent_noise(p, gamma)
        sp = channel_spectrum(noisy_rim_superop(v, noise, RimSettings(TAU)), v.n_distinct)
        assert 1 <= sp.count("fixed") < v.n_distinct
        assert np.all(np.abs(sp.eigenvalues) <= 1 + 1e-9)
        assert not sp.window_empty
        highs.append(sp.m_high)
        assert np.isclose(sp.m_low, 292.6, atol=0.3)
    assert highs[0] > highs[1] > highs[2]
    assert np.allclose(highs, [6468, 2924, 1109], rtol=2e-3)
