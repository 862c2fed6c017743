import math

import numpy as np
import pytest

from thermospike.errors import ConfigurationError
from thermospike.errors import FitError
from thermospike.errors import ThermometryError
from thermospike.neuron import NeuronParams
from thermospike.noise import HIGH
from thermospike.noise import LOW
from thermospike.noise import MID
from thermospike.noise import SILENT
from thermospike.noise import RngStreamKey
from thermospike.thermometry import OUMoments
from thermospike.thermometry import TransferCurve
from thermospike.thermometry import TransferPoint
from thermospike.thermometry import effective_window
from thermospike.thermometry import estimate_temperature
from thermospike.thermometry import f_kernel
from thermospike.thermometry import first_passage_histogram
from thermospike.thermometry import first_passage_times
from thermospike.thermometry import fit_logistic
from thermospike.thermometry import half_activation_current
from thermospike.thermometry import logistic
from thermospike.thermometry import measure_transfer
from thermospike.thermometry import mfpt
from thermospike.thermometry import ou_moments
from thermospike.thermometry import p_spike_analytic
from thermospike.thermometry import temperature_analytic


@pytest.fixture
def params() -> NeuronParams:
    return NeuronParams()


def synthetic_curve(
    currents: np.ndarray, midpoint: float, temperature: float, R: float = 1.0
) -> TransferCurve:
    p = logistic(R * currents, midpoint, temperature)
    return TransferCurve(
        tuple(TransferPoint(float(i), float(q), 1000) for i, q in zip(currents, p)),
        R=R,
    )


def test_ou_moments(params: NeuronParams) -> None:
    mom = ou_moments(params, MID, 0.5)
    assert mom.mu == pytest.approx(0.5 + 2.0 * (5.0 * 0.1 - 6.15 * 0.1))
    assert mom.variance == pytest.approx(2.0 * (5.0 * 0.01 + 6.15 * 0.01))
    assert ou_moments(params, SILENT, 0.5) == OUMoments(0.5, 0.0)


def test_f_kernel() -> None:
    assert f_kernel(0.0) == pytest.approx(math.sqrt(math.pi))
    # Deep negative tail: f(x) ~ -1 / x.
    assert f_kernel(-50.0) == pytest.approx(1.0 / 50.0, rel=1e-3)
    with pytest.raises(ThermometryError, match="overflows"):
        f_kernel(30.0)


def test_f_kernel_shape() -> None:
    values = [f_kernel(x) for x in np.linspace(-8.0, 8.0, 161)]
    assert (np.diff(values) > 0).all()
    assert all(f_kernel(x) >= math.sqrt(math.pi) for x in np.linspace(0.0, 5.0, 51))
    exact = math.sqrt(math.pi) * math.e * (1.0 + math.erf(1.0))
    assert f_kernel(1.0) == pytest.approx(exact, rel=1e-13)
    assert f_kernel(1.0) == pytest.approx(8.8782, abs=1e-3)


def test_mfpt(params: NeuronParams) -> None:
    assert mfpt(params, OUMoments(1.2, 0.3)) == 0.0
    with pytest.raises(ThermometryError, match="deterministic regime"):
        mfpt(params, OUMoments(0.5, 0.0))

    times = [mfpt(params, OUMoments(1.0 - y * 0.5, 0.5)) for y in (0.5, 1.0, 2.0, 3.0)]
    assert times == sorted(times)
    assert times[0] > 0


def test_mfpt_continuous_across_integration_branches(params: NeuronParams) -> None:
    below = mfpt(params, OUMoments(1.0 - 3.999999 * 0.25, 0.25))
    above = mfpt(params, OUMoments(1.0 - 4.000001 * 0.25, 0.25))
    assert above == pytest.approx(below, rel=1e-4)


def test_effective_window() -> None:
    assert effective_window(15.0, 2.0, 3.0) == 9.0
    with pytest.raises(ConfigurationError, match="shorter than transient exclusion"):
        effective_window(5.0, 2.0, 3.0)


def test_p_spike_analytic() -> None:
    assert p_spike_analytic(0.0, 9.0) == 1.0
    assert p_spike_analytic(math.inf, 9.0) == 0.0
    assert p_spike_analytic(9.0, 9.0) == pytest.approx(1.0 - math.exp(-1.0))


@pytest.mark.parametrize(
    "noise, expected, rel, abs_",
    [
        (LOW, 0.043, None, 0.006),
        (MID, 0.151, 0.1, None),
        (HIGH, 0.254, 0.1, None),
    ],
)
def test_temperature_analytic(
    params: NeuronParams, noise, expected: float, rel, abs_
) -> None:
    estimate = temperature_analytic(params, noise, 3.0, 15.0)
    assert estimate.t_analytic == pytest.approx(expected, rel=rel, abs=abs_)
    assert estimate.t_w_prime == 9.0
    assert estimate.slope == pytest.approx(1.0 / (4.0 * estimate.t_analytic))
    assert p_spike_analytic(estimate.t_mu, 9.0) == pytest.approx(0.5, abs=1e-4)


def test_temperature_grows_with_noise(params: NeuronParams) -> None:
    temperatures = [
        temperature_analytic(params, noise).t_analytic for noise in (LOW, MID, HIGH)
    ]
    assert temperatures == sorted(temperatures)


def test_half_activation_current(params: NeuronParams) -> None:
    midpoint = half_activation_current(params, MID, 15.0)
    assert 0.5 < midpoint < 0.8
    with pytest.raises(ThermometryError):
        half_activation_current(params, SILENT, 15.0)
    with pytest.raises(ConfigurationError):
        temperature_analytic(params, MID, 3.0, 5.0)


def test_measure_transfer_silent(params: NeuronParams) -> None:
    seen = []
    curve = measure_transfer(
        params,
        SILENT,
        [0.5, 0.99, 1.01, 2.0],
        1,
        15.0,
        RngStreamKey(0),
        progress=seen.append,
    )
    assert curve.probabilities.tolist() == [0.0, 0.0, 1.0, 1.0]
    assert seen == list(curve.points)


def test_measure_transfer_is_reproducible(params: NeuronParams) -> None:
    grid = [0.5, 0.65, 0.8]
    a = measure_transfer(params, MID, grid, 50, 15.0, RngStreamKey(4))
    b = measure_transfer(params, MID, grid, 50, 15.0, RngStreamKey(4))
    assert a == b
    assert all(p.n_trials == 50 for p in a.points)
    assert 0.0 < a.points[1].p_spike < 1.0


def test_measure_transfer_requires_trials(params: NeuronParams) -> None:
    with pytest.raises(ConfigurationError, match="at least one trial"):
        measure_transfer(params, MID, [0.5], 0, 15.0, RngStreamKey(0))


@pytest.mark.parametrize("R", [1.0, 2.0])
def test_fit_logistic_recovers_parameters(R: float) -> None:
    curve = synthetic_curve(np.linspace(0.0, 1.5, 31), 0.7 * R, 0.1, R)
    fit = fit_logistic(curve)
    assert fit.midpoint == pytest.approx(0.7, abs=1e-6)
    assert fit.temperature == pytest.approx(0.1, abs=1e-6)
    assert fit.residual < 1e-12


@pytest.mark.parametrize("temperature", [0.05, 0.15, 0.3])
def test_fit_logistic_recovers_binomial_samples(temperature: float) -> None:
    rng = RngStreamKey(int(temperature * 100)).generator()
    currents = np.linspace(0.7 - 6 * temperature, 0.7 + 6 * temperature, 25)
    spikes = rng.binomial(2000, logistic(currents, 0.7, temperature))
    curve = TransferCurve(
        tuple(
            TransferPoint(float(i), float(k) / 2000, 2000)
            for i, k in zip(currents, spikes)
        )
    )
    fit = fit_logistic(curve)
    assert fit.temperature == pytest.approx(temperature, rel=0.05)
    assert fit.midpoint == pytest.approx(0.7, abs=0.05 * temperature)


def test_fit_logistic_refusals() -> None:
    with pytest.raises(FitError, match="at least 4 points"):
        fit_logistic(synthetic_curve(np.array([0.5, 0.7, 0.9]), 0.7, 0.1))

    step = TransferCurve(
        tuple(TransferPoint(i, float(i > 1.0), 1) for i in (0.6, 0.8, 1.2, 1.4))
    )
    with pytest.raises(FitError, match="no transition in grid"):
        fit_logistic(step)

    narrow = synthetic_curve(np.linspace(0.65, 0.72, 8), 0.7, 0.1)
    with pytest.raises(FitError, match="does not span"):
        fit_logistic(narrow)


def test_transfer_curve_validation() -> None:
    with pytest.raises(ValueError, match="strictly increasing"):
        TransferCurve((TransferPoint(1.0, 0.5, 1), TransferPoint(0.5, 0.5, 1)))
    with pytest.raises(ValueError, match="out of range"):
        TransferCurve((TransferPoint(1.0, 1.5, 1),))


def test_logistic() -> None:
    assert logistic(0.7, 0.7, 0.1) == pytest.approx(0.5)
    assert logistic(0.7 + 0.1 * math.log(3.0), 0.7, 0.1) == pytest.approx(0.75)


def test_estimate_temperature(params: NeuronParams) -> None:
    analytic = estimate_temperature(params, MID, 15.0)
    assert analytic.t_fitted is None
    assert analytic.relative_disagreement is None

    curve = synthetic_curve(
        np.linspace(-0.5, 2.0, 26), analytic.analytic_midpoint, 0.2
    )
    combined = estimate_temperature(params, MID, 15.0, curve=curve)
    assert combined.t_fitted == pytest.approx(0.2, abs=1e-6)
    assert combined.midpoint == pytest.approx(analytic.analytic_midpoint, abs=1e-6)
    assert combined.relative_disagreement == pytest.approx(
        abs(analytic.t_analytic - 0.2) / 0.2, rel=1e-4
    )


def test_first_passage_times_limits(params: NeuronParams) -> None:
    with pytest.raises(ThermometryError):
        first_passage_times(params, OUMoments(0.5, 0.0), 10, RngStreamKey(0))

    times = first_passage_times(
        params, OUMoments(-2.0, 0.2), 20, RngStreamKey(0), max_time=1.0
    )
    assert np.isinf(times).all()


def test_first_passage_histogram() -> None:
    rng = RngStreamKey(0).generator()
    times = np.append(rng.exponential(5.0, size=5000), np.inf)
    counts, expected, edges = first_passage_histogram(times, bins=20)
    assert counts.sum() == 5000
    assert len(edges) == 21
    assert expected.sum() == pytest.approx(
        5000 * (1 - math.exp(-edges[-1] / 5.0)), rel=0.05
    )
    assert expected[0] == pytest.approx(counts[0], rel=0.1)


@pytest.mark.slow
@pytest.mark.parametrize("offset", [0.75, 1.0, 1.5])
def test_mfpt_matches_monte_carlo(params: NeuronParams, offset: float) -> None:
    mom = OUMoments(params.u_thresh - offset * 0.5, 0.5)
    times = first_passage_times(params, mom, 10000, RngStreamKey(1))
    assert np.isfinite(times).all()
    assert np.mean(times) == pytest.approx(mfpt(params, mom), rel=0.1)


@pytest.mark.slow
@pytest.mark.parametrize("noise, fitted", [(LOW, 0.06), (MID, 0.15), (HIGH, 0.24)])
def test_fitted_temperature_near_analytic(
    params: NeuronParams, noise, fitted: float
) -> None:
    analytic = temperature_analytic(params, noise)
    half_width = 6.0 * analytic.t_analytic
    grid = np.linspace(
        analytic.analytic_midpoint - half_width,
        analytic.analytic_midpoint + half_width,
        25,
    )
    curve = measure_transfer(params, noise, grid, 2000, 15.0, RngStreamKey(2))
    estimate = estimate_temperature(params, noise, 15.0, curve=curve)
    assert estimate.relative_disagreement is not None
    assert estimate.relative_disagreement < 0.35
    assert estimate.t_fitted == pytest.approx(fitted, rel=0.3)


@pytest.mark.slow
def test_p_spike_analytic_matches_measured_curve(params: NeuronParams) -> None:
    analytic = temperature_analytic(params, MID)
    half_width = 6.0 * analytic.t_analytic
    grid = np.linspace(
        analytic.analytic_midpoint - half_width,
        analytic.analytic_midpoint + half_width,
        25,
    )
    curve = measure_transfer(params, MID, grid, 2000, 15.0, RngStreamKey(3))
    t_w_prime = effective_window(15.0, params.tau_m, 3.0)
    for point in curve.points:
        t_mu = mfpt(params, ou_moments(params, MID, point.i_o))
        predicted = p_spike_analytic(t_mu, t_w_prime)
        # Model error plus three binomial standard errors.
        tolerance = 0.05 + 3 * math.sqrt(predicted * (1 - predicted) / 2000)
        assert abs(point.p_spike - predicted) < tolerance, point
