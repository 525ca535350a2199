import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, d, pure=False):
    if pure:
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi /= np.linalg.norm(psi)
        return np.outer(psi, psi.conj())
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_spectral(rng, d, s=None, low=0.0, high=1.0):
    """Spectral operator with ``s`` distinct eigenvalues in a random basis."""
    from iterqpe.model import SpectralOperator

    s = d if s is None else s
    values = np.sort(rng.uniform(low, high, size=s))
    labels = np.concatenate([np.arange(s), rng.integers(0, s, size=d - s)])
    u = random_unitary(rng, d)
    bases = [u[:, labels == k] for k in range(s)]
    return SpectralOperator(values, tuple(bases))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


TAU = 0.2
COUPLINGS = (0.52 / TAU, 1.04 / TAU)
TILTED_AXIS = (0.07, 0.07, 0.99508793)


def two_qubit_params(axis=(0.0, 0.0, 1.0)):
    from iterqpe.model import SpinStarParams

    return SpinStarParams.normalized(COUPLINGS, [axis, axis])


def coherent_noise(p, gamma):
    """Target operator and coherent-noise spec at relative strength ``gamma``."""
    from iterqpe.model import NoiseSpec, build_coherent_noise, build_spin_star, omegas_for_gamma

    v = build_spin_star(p)
    return v, NoiseSpec(coherent=build_coherent_noise(omegas_for_gamma(p, gamma, v.norm)))


ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> bool:
    """Store one acceptance outcome for the terminal summary."""
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
