import math

import numpy as np
import pytest

from thermospike.errors import ConfigurationError
from thermospike.errors import SimulationFault
from thermospike.neuron import NeuronParams
from thermospike.neuron import NeuronState
from thermospike.neuron import bandgap
from thermospike.neuron import charge_to_jump
from thermospike.neuron import grid_size
from thermospike.neuron import membrane_trace
from thermospike.neuron import simulate_window
from thermospike.neuron import simulate_windows
from thermospike.neuron import step
from thermospike.neuron import window_threshold
from thermospike.noise import LOW
from thermospike.noise import RngStreamKey
from thermospike.noise import noise_impulses


@pytest.fixture
def params() -> NeuronParams:
    return NeuronParams()


def test_suprathreshold_current_spikes_once(params: NeuronParams) -> None:
    result = simulate_window(params, 2.0, [], 15.0)
    assert result.on
    # u = 2 (1 - exp(-t / 2)) crosses 1 at 2 ln 2; the first grid point after it.
    assert result.spike_times == (pytest.approx(1.39),)
    assert result.spike_times[0] > 2.0 * math.log(2.0)


def test_subthreshold_current_stays_silent(params: NeuronParams) -> None:
    result = simulate_window(params, 0.5, [], 15.0)
    assert not result.on
    assert result.spike_times == ()


def test_window_threshold(params: NeuronParams) -> None:
    threshold = window_threshold(params, 15.0)
    assert threshold == pytest.approx(1.0 / (1.0 - math.exp(-14.99 / 2.0)))
    assert simulate_window(params, threshold * 1.0001, [], 15.0).on
    assert not simulate_window(params, threshold * 0.9999, [], 15.0).on


def test_zero_noise_step(params: NeuronParams) -> None:
    currents = np.round(np.arange(0.6, 2.0 + 1e-9, 0.01), 10)
    batch = simulate_windows(params, currents, None, 15.0)
    assert not batch.on[currents <= 0.99].any()
    assert batch.on[currents >= 1.01].all()


def test_simulate_windows_matches_single_windows(params: NeuronParams) -> None:
    currents = np.array([0.5, 1.2, 3.0])
    batch = simulate_windows(params, currents, None, 15.0)
    for column, current in enumerate(currents):
        single = simulate_window(params, float(current), [], 15.0)
        assert batch.on[column] == single.on
        assert [t for c, t in batch.spikes if c == column] == list(single.spike_times)


def test_impulse_on_grid_point_applies_at_its_time(params: NeuronParams) -> None:
    result = simulate_window(params, 0.0, [(5.0, 1.5)], 15.0)
    assert result.spike_times == (pytest.approx(5.0),)


@pytest.mark.parametrize(
    "impulse_time, expected_on",
    [
        (0.0, False),
        (0.005, True),
        (14.99, True),
        (15.0, False),
    ],
)
def test_window_endpoints_are_inhibited(
    params: NeuronParams, impulse_time: float, expected_on: bool
) -> None:
    assert simulate_window(params, 0.0, [(impulse_time, 2.0)], 15.0).on == expected_on


def test_step_resets_and_adapts(params: NeuronParams) -> None:
    state = NeuronState.at_rest(params)
    quiet = step(params, state, 0.0, [], 0.01)
    assert quiet.u == 0.0
    assert not quiet.spiked_in_window

    fired = step(params, state, 0.0, [(0.01, 1.5)], 0.01)
    assert fired.spiked_in_window
    assert fired.u == params.u_rest
    assert fired.last_spike == pytest.approx(0.01)
    assert fired.i_alpha == pytest.approx(params.adaptation_jump)


def test_step_follows_exponential_relaxation(params: NeuronParams) -> None:
    state = NeuronState.at_rest(params)
    for _ in range(100):
        state = step(params, state, 0.8, [], 0.01)
    assert state.u == pytest.approx(0.8 * (1.0 - math.exp(-1.0 / 2.0)))


def test_step_rejects_impulse_outside_step(params: NeuronParams) -> None:
    with pytest.raises(ValueError, match="outside"):
        step(params, NeuronState.at_rest(params), 0.0, [(0.5, 0.1)], 0.01)


def test_non_finite_state_is_a_fault(params: NeuronParams) -> None:
    with pytest.raises(SimulationFault):
        step(params, NeuronState.at_rest(params), float("nan"), [], 0.01)
    with pytest.raises(SimulationFault):
        simulate_window(params, float("nan"), [], 15.0)


def test_membrane_trace_marks_spikes(params: NeuronParams) -> None:
    times, u = membrane_trace(params, 2.0, [], 15.0)
    assert len(times) == len(u) == 1500
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(14.99)
    assert u.max() == 2.0 * params.u_thresh
    assert np.count_nonzero(u == 2.0 * params.u_thresh) == 1


@pytest.mark.parametrize("dt", [0.02, 0.01, 0.005])
def test_membrane_trace_is_exact_for_any_step(params: NeuronParams, dt: float) -> None:
    times, u = membrane_trace(params, 0.8, [], 15.0, dt)
    expected = 0.8 * -np.expm1(-times / params.tau_m)
    np.testing.assert_allclose(u, expected, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("i_const", [0.5, 1.2])
def test_halving_step_keeps_spikes(params: NeuronParams, i_const: float) -> None:
    for seed in range(20):
        train = noise_impulses(LOW, 15.0, RngStreamKey(seed))
        # On the coarse grid, so both steps see the same impulses.
        impulses = [(math.ceil(t / 0.01) * 0.01, j) for t, j in train.as_list()]
        coarse = simulate_window(params, i_const, impulses, 15.0, 0.01)
        fine = simulate_window(params, i_const, impulses, 15.0, 0.005)
        assert coarse.on == fine.on, seed
        if coarse.on:
            assert abs(coarse.spike_times[0] - fine.spike_times[0]) <= 0.01 + 1e-9


def test_adaptation_sizing() -> None:
    params = NeuronParams.with_adaptation_for(15.0, 2.0)
    assert params.tau_alpha == 15.0
    assert params.R * params.adaptation_jump == pytest.approx(4.0)


def test_helpers(params: NeuronParams) -> None:
    assert charge_to_jump(params, 0.2) == pytest.approx(0.1)
    assert bandgap(params, 0.9) == pytest.approx(0.1)
    assert grid_size(15.0, 0.01) == 1500


@pytest.mark.parametrize(
    "kwargs, key",
    [
        ({"tau_m": 0.0}, "tau_m"),
        ({"R": -1.0}, "R"),
        ({"u_thresh": 0.0}, "u_thresh"),
        ({"delta_alpha": -1.0}, "delta_alpha"),
    ],
)
def test_invalid_params(kwargs: dict[str, float], key: str) -> None:
    with pytest.raises(ConfigurationError) as excinfo:
        NeuronParams(**kwargs)
    assert excinfo.value.key == key


def test_window_too_short() -> None:
    with pytest.raises(ConfigurationError, match="less than two steps"):
        grid_size(0.01, 0.01)
