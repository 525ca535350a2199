"""Closed-form outcome statistics, estimators and sample-size calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, special, stats

from .channel import RimSettings, outcome0_probabilities
from .errors import AliasingError, DomainError, PeakCountError
from .model import SpectralOperator

DEFAULT_ETA = math.exp(-2)
ALIASING_TOL = 1e-12
SEPARATION_EPS = 1e-9


# ---------------------------------------------------------------- containers


@dataclass(frozen=True)
class OutcomeHistogram:
    """Counts of the scheme statistic on its grid.  Counts may be fractional
    for synthetic (noise-free) inputs."""

    scheme: str
    grid: np.ndarray
    counts: np.ndarray
    n: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        counts = np.asarray(self.counts)
        if grid.shape != counts.shape or grid.ndim != 1:
            raise DomainError("grid and counts must be matching 1-d arrays")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(counts < 0):
            raise DomainError("counts must be non-negative")
        if abs(counts.sum() - self.n) > 1e-9 * max(1.0, self.n):
            raise DomainError(f"counts sum to {counts.sum()}, expected {self.n}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_table(cls, table: "DistributionTable", n: float = 1.0) -> "OutcomeHistogram":
        return cls(table.scheme, table.grid, n * table.probabilities, n * table.probabilities.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n if self.n else np.zeros_like(self.grid)


@dataclass(frozen=True)
class DistributionTable:
    scheme: str
    grid: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != np.shape(self.grid):
            raise DomainError("grid and probabilities must have the same shape")
        if np.any(p < -1e-14):
            raise DomainError("negative probability")
        if abs(p.sum() - 1) > 1e-9:
            raise DomainError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True)
class EstimationResult:
    estimates: np.ndarray
    weights: np.ndarray
    delta: float | None = None
    matching: tuple = ()
    locations: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_peaks(self) -> int:
        return self.estimates.size


# -------------------------------------------------------------- closed forms


def repetitive_pdf(v: SpectralOperator, rho0, m: int, s: RimSettings) -> DistributionTable:
    """``p(f0) = sum_k w_k Binom(m, m f0; p0k)`` on the grid ``j/m``."""
    if m < 1:
        raise DomainError("m must be at least 1")
    w = v.weights(rho0)
    p0 = outcome0_probabilities(v, s)
    j = np.arange(m + 1)
    pmf = stats.binom.pmf(j[None, :], m, p0[:, None])
    return DistributionTable("repetitive", j / m, w @ pmf)


def fejer(n: int, x):
    """``[sin(N pi x) / (N sin(pi x))]^2`` with value 1 at integers."""
    x = np.asarray(x, dtype=float)
    delta = x - np.round(x)
    out = np.ones_like(delta)
    nz = delta != 0
    d = delta[nz]
    out[nz] = (np.sin(n * np.pi * d) / (n * np.sin(np.pi * d))) ** 2
    return out if out.ndim else float(out)


def adaptive_pdf(v: SpectralOperator, rho0, plan) -> DistributionTable:
    """``p(a) = sum_k w_k F_{2^m}(a - v_k / tau0)`` on the grid ``j/2^m``."""
    if plan.tau0 < v.norm * (1 - 1e-12):
        raise DomainError(f"tau0={plan.tau0} is below ||V||={v.norm}")
    w = v.weights(rho0)
    n = 2**plan.m
    grid = np.arange(n) / n
    vbar = v.eigenvalues / plan.tau0
    p = w @ fejer(n, grid[None, :] - vbar[:, None])
    return DistributionTable("adaptive", grid, p)


def relative_entropy(f, f_prime) -> float:
    """``S(F||F') = sum f_i ln(f_i / f'_i)``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(f_prime, dtype=float)
    if f.shape != g.shape:
        raise DomainError("distributions must have the same shape")
    if np.any((g <= 0) & (f > 0)):
        raise DomainError("F' must be positive on the support of F")
    return float(special.rel_entr(f, g).sum())


def relative_entropy_gaussian(f0, p0):
    """Second-order expansion ``(f0 - p0)^2 / (2 p0 p1)`` of the binary entropy."""
    return (np.asarray(f0) - p0) ** 2 / (2 * p0 * (1 - p0))


def entropy_kernel(f0, p0: float, m: int):
    """Large-deviation form ``exp(-m S)`` of the binomial weight (unnormalized)."""
    f0 = np.atleast_1d(np.asarray(f0, dtype=float))
    s = special.rel_entr(f0, p0) + special.rel_entr(1 - f0, 1 - p0)
    return np.exp(-m * s)


def _mean_f0(omega, tau: float, phi: float):
    return (1 - np.cos(2 * np.asarray(omega) * tau + phi)) / 2


def gaussian_kernel(f0, omega, m: int, tau: float, phi: float):
    """``exp(-(f0 - mu)^2 / 2 sigma^2) / (sqrt(2 pi) m sigma)`` with
    ``mu = [1 - cos(2 omega tau + phi)]/2`` and ``sigma^2 = mu(1 - mu)/m``.

    The ``1/m`` factor makes the kernel a probability per grid point.
    """
    mu = _mean_f0(omega, tau, phi)
    var = mu * (1 - mu) / m
    if np.any(var <= 0):
        raise DomainError("kernel is degenerate: mean is 0 or 1")
    sigma = np.sqrt(var)
    return np.exp(-((np.asarray(f0) - mu) ** 2) / (2 * var)) / (np.sqrt(2 * np.pi) * m * sigma)


def response_function(v: SpectralOperator, rho0) -> list:
    """Spectral lines ``(v_k, Tr(P_k rho0))``."""
    return list(zip(v.eigenvalues.tolist(), v.weights(rho0).tolist()))


def smeared_response(lines, m: int, s: RimSettings, grid=None) -> np.ndarray:
    """Response lines smeared by the Gaussian kernel on the ``f0`` grid."""
    grid = np.arange(m + 1) / m if grid is None else np.asarray(grid)
    total = np.zeros(grid.shape)
    for omega, w in lines:
        total += w * gaussian_kernel(grid, omega, m, s.tau, s.phi)
    return total


# -------------------------------------------------------- bounds and counts


def separation_bound(p0k: float, p0l: float, eta: float = DEFAULT_ETA) -> float:
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    if p0k == p0l:
        raise DomainError("equal outcome probabilities cannot be separated")
    num = (math.sqrt(p0k * (1 - p0k)) + math.sqrt(p0l * (1 - p0l))) ** 2
    return 0.5 * abs(math.log(eta)) * num / (p0k - p0l) ** 2


def separation_m(p0k: float, p0l: float, eta: float = DEFAULT_ETA) -> int:
    """Smallest integer cycle count strictly above :func:`separation_bound`."""
    return math.floor(separation_bound(p0k, p0l, eta) + SEPARATION_EPS) + 1


def _ceil(x: float) -> int:
    return math.ceil(x * (1 - 1e-12))


def hoeffding_samples(delta: float, eps: float) -> int:
    """``ceil(ln(2/eps) / (2 delta^2))`` samples for ``P(|f - p| >= delta) <= eps``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    return _ceil(math.log(2 / eps) / (2 * delta**2))


def scheme_sample_bound(
    eta: float,
    scheme: str,
    *,
    m: int | None = None,
    t: float | None = None,
    tau: float | None = None,
    tau0: float | None = None,
    eps: float = 0.05,
) -> float:
    """Unrounded Hoeffding count for a target eigenvalue error ``eta``.

    Give either ``m`` or the total time ``t`` (with ``tau`` for the repetitive
    scheme, ``tau0`` for the adaptive one).  From ``t`` the adaptive count uses
    ``2^m = t tau0 / pi``, the large-``m`` form of ``t = (2^m - 1) pi / tau0``.
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if (m is None) == (t is None):
        raise DomainError("give exactly one of m or t")
    log_term = math.log(2 / eps)
    if scheme == "repetitive":
        if m is None:
            if not tau:
                raise DomainError("tau is required to convert t for the repetitive scheme")
            m = t / tau
        delta = 4 / math.sqrt(2 * math.pi) * eta**2 * m**1.5
    elif scheme == "adaptive":
        if m is None:
            if not tau0:
                raise DomainError("tau0 is required to convert t for the adaptive scheme")
            growth = (t * tau0 / math.pi) ** 2
        else:
            growth = 4.0**m - 1
        delta = 2 * math.pi**2 * growth * eta**2 / 3
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    return log_term / (2 * delta**2)


def scheme_samples(eta: float, scheme: str, **kw) -> int:
    return _ceil(scheme_sample_bound(eta, scheme, **kw))


# --------------------------------------------------------------- estimators


@dataclass(frozen=True)
class PeakSettings:
    window: int = 3
    sigma_factor: float = 5.0
    floor: float = 3.0
    # maxima closer than this many peak widths are one peak split by shot noise
    merge_widths: float = 2.0


def smooth_counts(counts, window: int = 3, circular: bool = False) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    kernel = np.ones(window) / window
    if circular:
        pad = window // 2
        ext = np.concatenate([c[c.size - pad :], c, c[:pad]]) if pad else c
        return np.convolve(ext, kernel, mode="valid")
    return np.convolve(c, kernel, mode="same")


def find_histogram_peaks(
    h: OutcomeHistogram, n_peaks=None, settings=PeakSettings(), circular=False, widths=None
):
    """Peak indices (ascending) and their prominences in the smoothed counts.

    ``widths`` gives the expected peak width (in bins) at every grid point;
    when present, a maximum within ``merge_widths`` widths of a more prominent
    one is dropped.
    """
    g = h.grid.size
    counts = np.asarray(h.counts, dtype=float)
    support = np.flatnonzero(counts)
    if n_peaks is not None and 0 < support.size <= n_peaks:
        # sparse input: every occupied bin is a point mass, even adjacent ones
        return support, counts[support], smooth_counts(counts, settings.window, circular)
    pbar = 1.0 / g
    threshold = max(settings.sigma_factor * math.sqrt(h.n * pbar * (1 - pbar)), settings.floor)
    y = smooth_counts(h.counts, settings.window, circular)
    if circular:
        tiled = np.tile(y, 3)
        idx, props = signal.find_peaks(tiled, prominence=threshold)
        keep = (idx >= g) & (idx < 2 * g)
        idx, prom = idx[keep] - g, props["prominences"][keep]
    else:
        padded = np.concatenate([[0.0], y, [0.0]])
        idx, props = signal.find_peaks(padded, prominence=threshold)
        idx, prom = idx - 1, props["prominences"]
    # smoothing turns point masses into plateaus; use the raw maximum nearby
    half = settings.window // 2
    near = idx[:, None] + np.arange(-half, half + 1)
    near = near % g if circular else np.clip(near, 0, g - 1)
    if idx.size:
        raw = counts[near]
        idx = near[np.arange(idx.size), np.argmax(raw, axis=1)]
    # merge maxima that snapped onto the same bin, keeping the larger prominence
    order = np.lexsort((-prom, idx))
    idx, prom = idx[order], prom[order]
    keep = np.concatenate([[True], np.diff(idx) > 0]) if idx.size else np.zeros(0, bool)
    idx, prom = idx[keep], prom[keep]
    if widths is not None and idx.size > 1:
        widths = np.asarray(widths, dtype=float)
        accepted: list = []
        for i in np.argsort(-prom, kind="stable"):
            reach = settings.merge_widths * np.maximum(np.maximum(widths[idx[i]], widths[idx[accepted]]), 1.0)
            if not accepted or np.all(np.abs(idx[accepted] - idx[i]) > reach):
                accepted.append(i)
        accepted = np.sort(accepted)
        idx, prom = idx[accepted], prom[accepted]
    if n_peaks is not None and idx.size > n_peaks:
        top = np.sort(np.argsort(-prom, kind="stable")[:n_peaks])
        idx, prom = idx[top], prom[top]
    return idx, prom, y


def _partitions(peaks: np.ndarray, y: np.ndarray, circular: bool) -> list:
    """Index arrays splitting the grid at the minima between adjacent peaks."""
    g = y.size
    if peaks.size == 1:
        return [np.arange(g)]
    cuts = []
    pairs = list(zip(peaks[:-1], peaks[1:]))
    if circular:
        pairs.append((peaks[-1], peaks[0] + g))
    for a, b in pairs:
        seg = np.arange(a + 1, b) % g if b > a + 1 else np.array([], int)
        cuts.append(int(seg[np.argmin(y[seg])]) if seg.size else int(b % g))
    if not circular:
        edges = [0] + cuts + [g]
        return [np.arange(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    parts = []
    for k in range(peaks.size):
        start = cuts[k - 1] if k > 0 else cuts[-1]
        stop = cuts[k]
        length = (stop - start) % g or g
        parts.append((start + np.arange(length)) % g)
    return parts


def _deviance_residuals(counts, mu):
    mu = np.maximum(mu, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(counts > 0, counts * np.log(counts / mu), 0.0)
    dev = np.maximum(2 * (term - (counts - mu)), 0.0)
    return np.sign(counts - mu) * np.sqrt(dev)


def _fit_mixture(counts, n, model, x0, w0, lower, upper):
    """Poisson maximum-likelihood fit of ``n * sum_k w_k model(x_k)``."""
    s = len(x0)

    def residuals(theta):
        mu = n * (theta[s:] @ model(theta[:s]))
        return _deviance_residuals(counts, mu)

    theta0 = np.concatenate([np.clip(x0, lower, upper), np.clip(w0, 0, 1.5)])
    lb = np.concatenate([lower, np.zeros(s)])
    ub = np.concatenate([upper, np.full(s, 1.5)])
    try:
        res = optimize.least_squares(residuals, theta0, bounds=(lb, ub), method="trf", x_scale="jac")
    except (ValueError, np.linalg.LinAlgError):
        return np.asarray(x0, float), np.asarray(w0, float)
    return res.x[:s], res.x[s:]


def match_estimates(estimates, truth):
    """Order-preserving pairing of sorted estimates to sorted truths.

    The pairing matches as many truths as possible and, among those, minimizes
    the summed distance of matched pairs.  The error then charges unmatched
    truths their full ``|v|``; surplus estimates are ignored.  Returns the mean
    error over truths and a tuple mapping each truth (in the caller's order)
    to an estimate index, or -1.
    """
    e = np.sort(np.asarray(estimates, dtype=float))
    order = np.argsort(np.asarray(truth, dtype=float), kind="stable")
    t = np.asarray(truth, dtype=float)[order]
    nt, ne = t.size, e.size
    # lexicographic objective: (number of unmatched truths, matched distance)
    miss = np.full((nt + 1, ne + 1), np.inf)
    cost = np.full((nt + 1, ne + 1), np.inf)
    miss[0, :] = 0
    cost[0, :] = 0.0
    choice = np.zeros((nt + 1, ne + 1), dtype=np.int8)
    for i in range(1, nt + 1):
        miss[i, 0], cost[i, 0], choice[i, 0] = i, 0.0, 1
        for j in range(1, ne + 1):
            options = (
                (miss[i - 1, j - 1], cost[i - 1, j - 1] + abs(t[i - 1] - e[j - 1])),
                (miss[i - 1, j] + 1, cost[i - 1, j]),
                (miss[i, j - 1], cost[i, j - 1]),
            )
            k = min(range(3), key=lambda q: options[q])
            miss[i, j], cost[i, j] = options[k]
            choice[i, j] = k
    pairing = [-1] * nt
    total = 0.0
    i, j = nt, ne
    while i > 0:
        k = choice[i, j]
        if k == 0:
            pairing[order[i - 1]] = j - 1
            total += abs(t[i - 1] - e[j - 1])
            i, j = i - 1, j - 1
        elif k == 1:
            total += abs(t[i - 1])
            i -= 1
        else:
            j -= 1
    return float(total / nt), tuple(pairing)


def mean_abs_error(estimates, truth) -> float:
    return match_estimates(estimates, truth)[0]


def _check_counts(found: int, n_peaks, strict: bool):
    if found == 0 or (strict and n_peaks is not None and found < n_peaks):
        raise PeakCountError(f"found {found} peaks, expected {n_peaks}")


def estimate_repetitive(
    h: OutcomeHistogram,
    tau: float,
    phi: float,
    truth=None,
    *,
    n_peaks: int | None = None,
    strict: bool = True,
    refine: bool = True,
    settings: PeakSettings = PeakSettings(),
) -> EstimationResult:
    """Locate binomial peaks in the ``f0`` histogram and invert them.

    ``v = (arccos(1 - 2 p) - phi) / (2 tau)`` on the principal branch.  If the
    true spectrum is given, configurations that leave the branch are rejected.
    """
    if truth is not None:
        phase = 2 * np.asarray(truth, dtype=float) * tau + phi
        if np.any(phase < -ALIASING_TOL) or np.any(phase > np.pi + ALIASING_TOL):
            raise AliasingError("2 v tau + phi leaves [0, pi]; arccos inversion is ambiguous")
        if n_peaks is None:
            n_peaks = len(truth)
    m = h.grid.size - 1
    widths = np.sqrt(m * h.grid * (1 - h.grid))
    peaks, _, y = find_histogram_peaks(h, n_peaks, settings, circular=False, widths=widths)
    _check_counts(peaks.size, n_peaks, strict)
    parts = _partitions(peaks, y, circular=False)
    counts = np.asarray(h.counts, dtype=float)
    mass = np.array([counts[p].sum() for p in parts]) / h.n
    centroid = np.array(
        [counts[p] @ h.grid[p] / counts[p].sum() if counts[p].sum() else h.grid[k] for p, k in zip(parts, peaks)]
    )
    p_hat, w_hat = centroid, mass
    if refine:
        j = np.arange(m + 1)
        model = lambda p: stats.binom.pmf(j[None, :], m, np.asarray(p)[:, None])  # noqa: E731
        s = peaks.size
        p_hat, w_hat = _fit_mixture(counts, h.n, model, centroid, mass, np.zeros(s), np.ones(s))
    est = (np.arccos(np.clip(1 - 2 * p_hat, -1, 1)) - phi) / (2 * tau)
    return _finish(est, w_hat, p_hat, truth)


def estimate_adaptive(
    h: OutcomeHistogram,
    tau0: float,
    signed: bool = False,
    truth=None,
    *,
    n_peaks: int | None = None,
    strict: bool = True,
    refine: bool = False,
    settings: PeakSettings = PeakSettings(),
) -> EstimationResult:
    """Locate Fejer peaks on the circular ``a`` grid; ``v = tau0 * a``.

    In signed mode peaks above ``a = 1/2`` are read as ``a - 1``.  By default
    each peak is read at its grid point; ``refine`` fits the exact Fejer
    mixture for sub-bin locations.
    """
    if truth is not None and n_peaks is None:
        n_peaks = len(truth)
    n = h.grid.size
    peaks, _, y = find_histogram_peaks(h, n_peaks, settings, circular=True)
    _check_counts(peaks.size, n_peaks, strict)
    parts = _partitions(peaks, y, circular=True)
    counts = np.asarray(h.counts, dtype=float)
    mass = np.array([counts[p].sum() for p in parts]) / h.n
    loc = peaks.astype(float)
    if refine:
        nb = (counts[(peaks - 1) % n] + counts[(peaks + 1) % n]) > 0
        local = counts[(peaks[:, None] + np.arange(-1, 2)) % n]
        start = peaks + np.where(local.sum(axis=1) > 0, local @ np.arange(-1, 2) / np.maximum(local.sum(axis=1), 1e-300), 0)
        grid_idx = np.arange(n)
        model = lambda x: fejer(n, (grid_idx[None, :] - np.asarray(x)[:, None]) / n)  # noqa: E731
        fit_x, fit_w = _fit_mixture(counts, h.n, model, start, mass, peaks - 1.0, peaks + 1.0)
        # a peak with empty neighbours is a point mass; keep it on its grid point
        loc = np.where(nb, fit_x, peaks)
        mass = np.where(nb, fit_w, mass)
    loc = np.mod(loc + 0.5, n) - 0.5
    a = loc / n
    if signed:
        a = np.where(peaks > n / 2, a - 1, a)
    est = tau0 * a
    return _finish(est, mass, a, truth)


def _finish(est, weights, locations, truth) -> EstimationResult:
    order = np.argsort(est, kind="stable")
    est, weights, locations = est[order], np.asarray(weights)[order], np.asarray(locations)[order]
    if truth is None:
        return EstimationResult(est, weights, None, (), locations)
    delta, pairing = match_estimates(est, truth)
    return EstimationResult(est, weights, delta, pairing, locations)


# ------------------------------------------------------------- sweep tools


def scaling_fit(points) -> tuple:
    """Least-squares slope and intercept of ``log Delta`` against ``log t``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise DomainError("need at least three (t, Delta) pairs")
    if np.any(arr <= 0):
        raise DomainError("t and Delta must be positive")
    slope, intercept = np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)
    return float(slope), float(intercept)


def moving_average(values, window: int = 5) -> np.ndarray:
    """Centered running mean; the window shrinks at the ends."""
    v = np.asarray(values, dtype=float)
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(v)])
    lo = np.clip(np.arange(v.size) - half, 0, v.size)
    hi = np.clip(np.arange(v.size) + half + 1, 0, v.size)
    return (c[hi] - c[lo]) / (hi - lo)
