from __future__ import annotations

import math
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy import integrate
from scipy import optimize
from scipy import special

from .errors import ConfigurationError
from .errors import FitError
from .errors import ThermometryError
from .neuron import DEFAULT_DT
from .neuron import NeuronParams
from .neuron import grid_size
from .neuron import simulate_windows
from .noise import NoiseConfig
from .noise import RngStreamKey
from .noise import impulse_grid
from .noise import noise_impulses

# Number of membrane time constants excluded from the start of the window.
GAMMA = 3.0

_LOG2_SQUARED = math.log(2.0) ** 2
# Discrete-monitoring correction for barrier crossings of a sampled diffusion.
_BARRIER_SHIFT = 0.5826

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class OUMoments:
    """Mean and noise amplitude of the diffusion approximating the membrane."""

    mu: float
    sigma: float

    @property
    def variance(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class ThermoEstimate:
    """
    Analytic temperature of a noise regime, optionally next to the fitted one.

    ``analytic_midpoint`` is the constant current where the analytic spike probability is
    one half; ``midpoint`` is the midpoint of the fitted logistic.
    """

    t_analytic: float
    t_mu: float
    t_w_prime: float
    gamma: float
    slope: float
    analytic_midpoint: float
    t_fitted: float | None = None
    midpoint: float | None = None

    @property
    def relative_disagreement(self) -> float | None:
        if self.t_fitted is None:
            return None
        return abs(self.t_analytic - self.t_fitted) / self.t_fitted


class TransferPoint(NamedTuple):
    i_o: float
    p_spike: float
    n_trials: int


@dataclass(frozen=True)
class TransferCurve:
    points: tuple[TransferPoint, ...]
    R: float = 1.0

    def __post_init__(self) -> None:
        currents = [p.i_o for p in self.points]
        if any(b <= a for a, b in zip(currents, currents[1:])):
            raise ValueError("transfer curve currents must be strictly increasing")
        for point in self.points:
            if not 0.0 <= point.p_spike <= 1.0:
                raise ValueError(f"spike probability out of range: {point}")

    @property
    def currents(self) -> FloatArray:
        return np.array([p.i_o for p in self.points], dtype=float)

    @property
    def probabilities(self) -> FloatArray:
        return np.array([p.p_spike for p in self.points], dtype=float)


class LogisticFit(NamedTuple):
    midpoint: float
    temperature: float
    residual: float


def logistic(
    x: float | FloatArray, midpoint: float, temperature: float
) -> float | FloatArray:
    """Spike probability increasing in drive: ``1 / (1 + exp(-(x - midpoint) / T))``."""
    return special.expit((np.asarray(x) - midpoint) / temperature)


def ou_moments(params: NeuronParams, cfg: NoiseConfig, i_o: float) -> OUMoments:
    """
    ``mu = u_rest + R I_o + tau_m (lambda_e w_e - lambda_i w_i)`` and
    ``sigma^2 = tau_m (lambda_e w_e^2 + lambda_i w_i^2)``, rates converted to 1/ms.
    """
    rate_e = cfg.lambda_e / 1000.0
    rate_i = cfg.lambda_i / 1000.0
    mu = (
        params.u_rest
        + params.R * i_o
        + params.tau_m * (rate_e * cfg.w_e - rate_i * cfg.w_i)
    )
    variance = params.tau_m * (rate_e * cfg.w_e**2 + rate_i * cfg.w_i**2)
    return OUMoments(mu=mu, sigma=math.sqrt(variance))


def f_kernel(x: float) -> float:
    """
    ``sqrt(pi) * exp(x^2) * (1 + erf(x))``, evaluated as ``sqrt(pi) * erfcx(-x)`` so the
    negative tail does not cancel.
    """
    if not math.isfinite(x):
        raise ThermometryError(f"f_kernel argument must be finite, got {x!r}")
    value = math.sqrt(math.pi) * float(special.erfcx(-x))
    if not math.isfinite(value):
        raise ThermometryError(
            f"f_kernel overflows at x={x}: the threshold is too many noise "
            "amplitudes above the mean potential"
        )
    return value


def _kernel_integral(upper: float) -> float:
    if upper <= 4.0:
        value, _ = integrate.quad(
            lambda x: math.sqrt(math.pi) * special.erfcx(-x),
            0.0,
            upper,
            epsrel=1e-8,
            limit=200,
        )
        return value

    # exp(x^2) is factored out at the upper limit to keep the integrand bounded.
    scaled, _ = integrate.quad(
        lambda x: math.sqrt(math.pi)
        * (1.0 + special.erf(x))
        * math.exp((x - upper) * (x + upper)),
        0.0,
        upper,
        epsrel=1e-8,
        limit=200,
    )
    try:
        return math.exp(upper**2) * scaled
    except OverflowError:
        raise ThermometryError(
            f"mean first-passage time overflows: threshold is {upper:.3g} noise "
            "amplitudes above the mean potential"
        )


def mfpt(params: NeuronParams, mom: OUMoments) -> float:
    """
    Mean first-passage time (ms) from ``mu`` to the threshold,
    ``tau_m * integral_0^((u_t - mu) / sigma) f(x) dx``.

    Returns 0 when the mean already sits at or above the threshold.
    """
    if mom.sigma == 0:
        raise ThermometryError("deterministic regime, MFPT undefined by this formula")
    upper = (params.u_thresh - mom.mu) / mom.sigma
    if upper <= 0:
        return 0.0
    return params.tau_m * _kernel_integral(upper)


def effective_window(window: float, tau_m: float, gamma: float = GAMMA) -> float:
    """``T'_W = T_W - gamma * tau_m``, the part of the window after the transient."""
    t_w_prime = window - gamma * tau_m
    if t_w_prime <= 0:
        raise ConfigurationError(
            f"window shorter than transient exclusion: T_W={window} ms but "
            f"gamma * tau_m = {gamma * tau_m} ms",
            key="gamma",
        )
    return t_w_prime


def p_spike_analytic(t_mu: float, t_w_prime: float) -> float:
    """Probability of at least one passage in ``T'_W``: ``1 - exp(-T'_W / T_mu)``."""
    if not t_w_prime > 0:
        raise ConfigurationError(f"T'_W must be positive, got {t_w_prime!r}")
    if t_mu <= 0:
        return 1.0
    if math.isinf(t_mu):
        return 0.0
    return -math.expm1(-t_w_prime / t_mu)


def temperature_from_moments(
    params: NeuronParams, mom: OUMoments, t_w_prime: float
) -> tuple[float, float]:
    """
    Temperature and sigmoid slope evaluated at the given moments:
    ``m = (log 2)^2 tau_m f(y) / (2 T'_W sigma)`` and ``T = 1 / (4 m)``.
    """
    if mom.sigma == 0:
        raise ThermometryError("deterministic regime, temperature is zero")
    y = (params.u_thresh - mom.mu) / mom.sigma
    slope = 0.5 * _LOG2_SQUARED * params.tau_m / (t_w_prime * mom.sigma) * f_kernel(y)
    return 1.0 / (4.0 * slope), slope


def half_activation_current(
    params: NeuronParams,
    cfg: NoiseConfig,
    window: float,
    gamma: float = GAMMA,
    xtol: float = 1e-6,
) -> float:
    """
    Constant current where the analytic spike probability is one half, by bisection.
    """
    t_w_prime = effective_window(window, params.tau_m, gamma)
    drift = ou_moments(params, cfg, 0.0)
    if drift.sigma == 0:
        raise ThermometryError("deterministic regime, no stochastic transition")

    def excess(i_o: float) -> float:
        t_mu = mfpt(params, ou_moments(params, cfg, i_o))
        return p_spike_analytic(t_mu, t_w_prime) - 0.5

    high = (params.u_thresh - drift.mu) / params.R
    low = (params.u_thresh - 12.0 * drift.sigma - drift.mu) / params.R
    return float(optimize.bisect(excess, low, high, xtol=xtol))


def temperature_analytic(
    params: NeuronParams,
    cfg: NoiseConfig,
    gamma: float = GAMMA,
    window: float = 15.0,
) -> ThermoEstimate:
    """
    Closed-form temperature of a noise regime,
    ``T = T'_W sigma / (2 (log 2)^2 tau_m f((u_t - mu) / sigma))`` with ``mu`` taken at
    the current where the analytic spike probability is one half.
    """
    t_w_prime = effective_window(window, params.tau_m, gamma)
    midpoint = half_activation_current(params, cfg, window, gamma)
    mom = ou_moments(params, cfg, midpoint)
    temperature, slope = temperature_from_moments(params, mom, t_w_prime)
    return ThermoEstimate(
        t_analytic=temperature,
        t_mu=mfpt(params, mom),
        t_w_prime=t_w_prime,
        gamma=gamma,
        slope=slope,
        analytic_midpoint=midpoint,
    )


def measure_transfer(
    params: NeuronParams,
    cfg: NoiseConfig,
    i_o_grid: Sequence[float],
    n_trials: int,
    window: float,
    key: RngStreamKey,
    dt: float = DEFAULT_DT,
    *,
    progress: Callable[[TransferPoint], None] | None = None,
) -> TransferCurve:
    """
    Fraction of windows with at least one spike for each constant current.

    Trial ``j`` at grid index ``i`` draws its background from
    ``key.with_(neuron=key.neuron + i, trial=key.trial + j)``.
    """
    if n_trials < 1:
        raise ConfigurationError(
            f"need at least one trial, got {n_trials}", key="trials"
        )
    n_steps = grid_size(window, dt)
    points = []
    for index, i_o in enumerate(i_o_grid):
        jumps = None
        if not cfg.is_silent:
            trains = [
                noise_impulses(
                    cfg,
                    window,
                    key.with_(neuron=key.neuron + index, trial=key.trial + trial),
                )
                for trial in range(n_trials)
            ]
            jumps = impulse_grid(trains, n_steps, dt)
        batch = simulate_windows(
            params, np.full(n_trials, float(i_o)), jumps, window, dt
        )
        point = TransferPoint(
            float(i_o), int(batch.on.sum()) / n_trials, n_trials
        )
        if progress is not None:
            progress(point)
        points.append(point)
    return TransferCurve(tuple(points), R=params.R)


def fit_logistic(curve: TransferCurve) -> LogisticFit:
    """
    Least-squares fit of ``P(I) = 1 / (1 + exp(-(R I - c) / T))`` on probabilities.

    The returned midpoint is in current units (``c / R``); ``residual`` is the sum of
    squared residuals.
    """
    points = sorted(curve.points)
    if len(points) < 4:
        raise FitError(f"need at least 4 points to fit a logistic, got {len(points)}")
    x = curve.R * np.array([p.i_o for p in points])
    p = np.array([p.p_spike for p in points])
    if not ((p > 0) & (p < 1)).any():
        raise FitError("no transition in grid")
    if not (p.min() < 0.25 and p.max() > 0.75):
        raise FitError(
            "grid does not span the transition (needs points below 0.25 and above 0.75)"
        )

    midpoint0 = float(x[np.argmin(np.abs(p - 0.5))])
    quartile_low = float(x[np.argmax(p >= 0.25)])
    quartile_high = float(x[np.argmax(p >= 0.75)])
    temperature0 = (quartile_high - quartile_low) / (2.0 * math.log(3.0))
    if not temperature0 > 0:
        temperature0 = (x[-1] - x[0]) / 20.0

    def residuals(theta: FloatArray) -> FloatArray:
        return special.expit((x - theta[0]) / theta[1]) - p

    result = optimize.least_squares(
        residuals,
        x0=np.array([midpoint0, temperature0]),
        bounds=([-np.inf, 1e-9], [np.inf, np.inf]),
        method="trf",
        ftol=1e-12,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=10000,
    )
    if not result.success:
        raise FitError(f"logistic fit did not converge: {result.message}")
    midpoint, temperature = result.x
    return LogisticFit(
        midpoint=float(midpoint / curve.R),
        temperature=float(temperature),
        residual=float(np.sum(result.fun**2)),
    )


def estimate_temperature(
    params: NeuronParams,
    cfg: NoiseConfig,
    window: float,
    gamma: float = GAMMA,
    curve: TransferCurve | None = None,
) -> ThermoEstimate:
    """Analytic temperature, plus the fitted one when a measured curve is given."""
    estimate = temperature_analytic(params, cfg, gamma, window)
    if curve is None:
        return estimate
    fit = fit_logistic(curve)
    return ThermoEstimate(
        t_analytic=estimate.t_analytic,
        t_mu=estimate.t_mu,
        t_w_prime=estimate.t_w_prime,
        gamma=estimate.gamma,
        slope=estimate.slope,
        analytic_midpoint=estimate.analytic_midpoint,
        t_fitted=fit.temperature,
        midpoint=fit.midpoint,
    )


def first_passage_times(
    params: NeuronParams,
    mom: OUMoments,
    n_paths: int,
    key: RngStreamKey,
    dt: float = 0.005,
    max_time: float | None = None,
) -> FloatArray:
    """
    Monte-Carlo first-passage times (ms) of the diffusion
    ``tau_m du = (mu - u) dt + sigma sqrt(tau_m) dW`` started at ``mu``.

    Paths use the exact transition of the process; crossings are checked against a
    threshold lowered by the discrete-monitoring correction. Paths that do not cross
    before ``max_time`` (default: 25 analytic MFPTs) report ``inf``.
    """
    if mom.sigma <= 0:
        raise ThermometryError("deterministic regime, first passage is not random")
    if max_time is None:
        max_time = 25.0 * max(mfpt(params, mom), params.tau_m)
    decay = math.exp(-dt / params.tau_m)
    spread = mom.sigma / math.sqrt(2.0) * math.sqrt(1.0 - decay**2)
    shift = _BARRIER_SHIFT * mom.sigma * math.sqrt(dt / params.tau_m)
    barrier = params.u_thresh - shift

    rng = key.generator()
    times = np.full(n_paths, np.inf)
    active = np.arange(n_paths)
    u = np.full(n_paths, mom.mu)
    n_max = int(math.ceil(max_time / dt))
    for n in range(1, n_max + 1):
        u = mom.mu + (u - mom.mu) * decay + spread * rng.standard_normal(len(active))
        crossed = u >= barrier
        if crossed.any():
            times[active[crossed]] = n * dt
            active = active[~crossed]
            u = u[~crossed]
            if len(active) == 0:
                break
    return times


def first_passage_histogram(
    times: FloatArray, bins: int = 30
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Histogram of first-passage times next to the counts expected from an exponential
    density with the same mean: ``(counts, expected, edges)``.
    """
    finite = times[np.isfinite(times)]
    counts, edges = np.histogram(finite, bins=bins)
    mean = finite.mean()
    cdf = -np.expm1(-edges / mean)
    expected = len(finite) * np.diff(cdf)
    return counts.astype(float), expected, edges
