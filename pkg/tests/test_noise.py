import numpy as np
import pytest
from scipy import stats

from thermospike.errors import ConfigurationError
from thermospike.noise import HIGH
from thermospike.noise import LOW
from thermospike.noise import MID
from thermospike.noise import REGIMES
from thermospike.noise import SILENT
from thermospike.noise import ImpulseTrain
from thermospike.noise import NoiseConfig
from thermospike.noise import PoissonStream
from thermospike.noise import RngStreamKey
from thermospike.noise import Source
from thermospike.noise import compose_impulses
from thermospike.noise import compose_input
from thermospike.noise import generate_poisson
from thermospike.noise import impulse_grid
from thermospike.noise import noise_impulses


def stream(events: list[float], horizon: float = 15.0) -> PoissonStream:
    return PoissonStream(np.array(events, dtype=float), None, 1.0, horizon)


def test_streams_are_reproducible() -> None:
    key = RngStreamKey(7, neuron=3, source=Source.Excitatory, trial=11)
    a = generate_poisson(5000.0, 15.0, key)
    b = generate_poisson(5000.0, 15.0, key)
    np.testing.assert_array_equal(a.events, b.events)

    other = generate_poisson(5000.0, 15.0, key.with_(trial=12))
    assert not np.array_equal(a.events, other.events)


def test_stream_independent_of_draw_order() -> None:
    first = RngStreamKey(1, neuron=0)
    second = RngStreamKey(1, neuron=1)
    a_then_b = (
        generate_poisson(920.0, 15.0, first).events,
        generate_poisson(920.0, 15.0, second).events,
    )
    b = generate_poisson(920.0, 15.0, second).events
    a = generate_poisson(920.0, 15.0, first).events
    np.testing.assert_array_equal(a_then_b[0], a)
    np.testing.assert_array_equal(a_then_b[1], b)


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"seed": -1}, ValueError),
        ({"seed": 0, "neuron": -2}, ValueError),
        ({"seed": True}, TypeError),
        ({"seed": 0, "trial": 1.5}, TypeError),
    ],
)
def test_invalid_keys(kwargs: dict[str, object], error: type[Exception]) -> None:
    with pytest.raises(error):
        RngStreamKey(**kwargs)  # type:ignore[arg-type]


def test_poisson_stream_properties() -> None:
    events = generate_poisson(1000.0, 1000.0, RngStreamKey(0)).events
    assert (np.diff(events) > 0).all()
    assert events[0] >= 0 and events[-1] < 1000.0
    # 1000 expected events, standard deviation about 32.
    assert 840 < len(events) < 1160


def counts(rate: float, horizon: float, n_seeds: int = 1000) -> np.ndarray:
    return np.array(
        [len(generate_poisson(rate, horizon, RngStreamKey(s))) for s in range(n_seeds)]
    )


def test_poisson_count_statistics() -> None:
    n = counts(5000.0, 15.0)
    # Poisson counts: mean and variance both 75.
    assert abs(n.mean() - 75.0) < 4 * np.sqrt(75.0 / 1000)
    assert abs(n.var(ddof=1) - 75.0) < 4 * np.sqrt((75.0 + 2 * 75.0**2) / 1000)


def test_poisson_counts_over_one_second() -> None:
    n = counts(5000.0, 1000.0)
    assert abs(n.mean() - 5000.0) < 4 * np.sqrt(5000.0 / 1000)
    outside = np.abs(n - 5000.0) > 3 * np.sqrt(5000.0)
    assert outside.mean() <= 0.01


def test_poisson_split_horizon() -> None:
    full_counts, split_counts = [], []
    full_gaps, split_gaps = [], []
    for seed in range(1000):
        full = generate_poisson(5000.0, 30.0, RngStreamKey(seed, trial=0)).events
        first = generate_poisson(5000.0, 15.0, RngStreamKey(seed, trial=1)).events
        second = generate_poisson(5000.0, 15.0, RngStreamKey(seed, trial=2)).events
        joined = np.concatenate([first, second + 15.0])
        full_counts.append(len(full))
        split_counts.append(len(joined))
        if seed < 200:
            full_gaps.append(np.diff(full))
            split_gaps.extend([np.diff(first), np.diff(second)])
    difference = np.mean(full_counts) - np.mean(split_counts)
    assert abs(difference) < 4 * np.sqrt(2 * 150.0 / 1000)
    assert stats.ks_2samp(full_counts, split_counts).pvalue > 0.01
    gaps = stats.ks_2samp(np.concatenate(full_gaps), np.concatenate(split_gaps))
    assert gaps.pvalue > 0.01


def test_zero_rate_is_empty() -> None:
    assert len(generate_poisson(0.0, 15.0, RngStreamKey(0))) == 0


@pytest.mark.parametrize("rate, horizon", [(-1.0, 15.0), (float("inf"), 15.0), (1.0, 0)])
def test_invalid_poisson_arguments(rate: float, horizon: float) -> None:
    with pytest.raises(ValueError):
        generate_poisson(rate, horizon, RngStreamKey(0))


def test_compose_impulses_orders_ties_excitatory_first() -> None:
    cfg = NoiseConfig(lambda_e=1.0, lambda_i=1.0, w_e=0.1, w_i=0.2)
    train = compose_impulses(stream([1.0, 2.0]), stream([1.0, 0.5]), cfg)
    np.testing.assert_array_equal(train.times, [0.5, 1.0, 1.0, 2.0])
    np.testing.assert_array_equal(train.jumps, [-0.2, 0.1, -0.2, 0.1])


def test_compose_impulses_rejects_different_horizons() -> None:
    with pytest.raises(ValueError, match="different horizons"):
        compose_impulses(stream([], 15.0), stream([], 30.0), MID)


def test_compose_input() -> None:
    i_o, impulses = compose_input(0.7, stream([3.0]), stream([4.0]), MID)
    assert i_o == 0.7
    assert impulses == [(3.0, 0.1), (4.0, -0.1)]


def test_noise_impulses() -> None:
    assert len(noise_impulses(SILENT, 15.0, RngStreamKey(0)).times) == 0

    train = noise_impulses(LOW, 15.0, RngStreamKey(0))
    assert (train.jumps == LOW.w_e).all()

    train = noise_impulses(HIGH, 15.0, RngStreamKey(0))
    assert (train.jumps > 0).any() and (train.jumps < 0).any()
    assert (np.diff(train.times) >= 0).all()


def test_impulse_grid() -> None:
    trains = [
        ImpulseTrain.from_list([(0.0, 5.0), (0.005, 0.1), (0.01, 0.2), (0.02, 0.3)]),
        [(0.03, -0.1), (0.03, -0.1), (0.2, 9.0)],
    ]
    grid = impulse_grid(trains, 10, 0.01)
    assert grid.shape == (11, 2)
    # The impulse at 0 belongs to the inhibited phase; ties add up.
    assert grid[:, 0].tolist() == pytest.approx(
        [0.0, 0.3, 0.3, 0, 0, 0, 0, 0, 0, 0, 0]
    )
    assert grid[3, 1] == pytest.approx(-0.2)
    assert grid[:, 1].sum() == pytest.approx(-0.2)


def test_noise_config() -> None:
    assert SILENT.is_silent
    assert NoiseConfig(lambda_e=100.0, w_e=0.0).is_silent
    assert not LOW.is_silent
    assert MID.scaled(2.0) == NoiseConfig(lambda_e=10000.0, lambda_i=12300.0)
    assert REGIMES["high"] is HIGH

    with pytest.raises(ConfigurationError) as excinfo:
        NoiseConfig(lambda_e=-5.0)
    assert excinfo.value.key == "lambda_e"
