from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from .errors import ConfigurationError
from .errors import PatternGenerationError
from .neuron import DEFAULT_DT
from .neuron import NeuronParams
from .neuron import window_threshold
from .network import CycleState
from .network import NetworkRun
from .network import RhythmConfig
from .network import TwoStateNetwork
from .network import WeightMatrix
from .network import run_network
from .noise import NoiseConfig
from .noise import RngStreamKey
from .thermometry import fit_logistic
from .thermometry import measure_transfer
from .thermometry import temperature_analytic

FieldCoding = Literal["centered", "spin", "binary"]
BinaryArray = npt.NDArray[np.int8]
FloatArray = npt.NDArray[np.float64]

MAX_PATTERN_ATTEMPTS = 100
# In units of a stored pattern's own field (see default_weight_scale).
DEFAULT_TEMPERATURE = 0.31


@dataclass(frozen=True, eq=False)
class PatternSet:
    """
    Stored binary patterns, one per row; ``sparsity`` is the fraction of zeros.
    """

    patterns: BinaryArray
    sparsity: float
    min_overlap: float

    def __post_init__(self) -> None:
        patterns = np.atleast_2d(np.asarray(self.patterns, dtype=np.int8))
        if not np.isin(patterns, (0, 1)).all():
            raise ValueError("patterns must be binary")
        object.__setattr__(self, "patterns", patterns)

    @property
    def n(self) -> int:
        return self.patterns.shape[1]

    def __len__(self) -> int:
        return self.patterns.shape[0]

    @property
    def spins(self) -> npt.NDArray[np.int_]:
        """Patterns in +-1 coding."""
        return 2 * self.patterns.astype(int) - 1

    @property
    def activity(self) -> float:
        """Mean fraction of active units."""
        return float(self.patterns.mean())


class Transition(NamedTuple):
    cycle: int
    from_pattern: int
    to_pattern: int


@dataclass(frozen=True, eq=False)
class CorrelationTrace:
    """Per-cycle correlations with each stored pattern, shape ``(n_cycles, S)``."""

    cycles: npt.NDArray[np.int_]
    correlations: FloatArray

    @property
    def argmax(self) -> npt.NDArray[np.int_]:
        return np.argmax(self.correlations, axis=1)

    @property
    def max_correlation(self) -> FloatArray:
        return np.max(self.correlations, axis=1)

    def dwell_fraction(self, threshold: float = 0.8) -> float:
        """Fraction of cycles whose best correlation exceeds ``threshold``."""
        if len(self.cycles) == 0:
            return 0.0
        return float(np.mean(self.max_correlation > threshold))


@dataclass(frozen=True)
class RegimeCalibration:
    """
    Logistic of a noise regime in potential units: ``midpoint`` is ``c`` and
    ``temperature`` the fitted ``T``; ``None`` for a silent regime.
    """

    midpoint: float
    temperature: float | None


@dataclass(frozen=True, eq=False)
class BoltzmannRun:
    trace: CorrelationTrace
    transitions: tuple[Transition, ...]
    network: NetworkRun
    weights: WeightMatrix


@dataclass(frozen=True, eq=False)
class FlipStatistics:
    """
    Observed on-frequencies of units binned by their predicted logistic probability.
    """

    predicted: FloatArray
    observed: FloatArray
    counts: npt.NDArray[np.int_]

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def max_deviation(self) -> float:
        used = self.counts > 0
        if not used.any():
            return 0.0
        return float(np.max(np.abs(self.predicted[used] - self.observed[used])))


def ones_count(n: int, sparsity: float) -> int:
    if not 0 < sparsity < 1:
        raise ConfigurationError(
            f"must be in (0, 1), got {sparsity!r}", key="sparsity"
        )
    ones = int(round(n * (1.0 - sparsity)))
    if not 0 < ones < n:
        raise ConfigurationError(
            f"{n} units at sparsity {sparsity} leave no active or no silent unit",
            key="sparsity",
        )
    return ones


def overlap(a: BinaryArray, b: BinaryArray) -> float:
    """Fraction of the active units of ``a`` that are also active in ``b``."""
    return float(np.sum(a & b)) / float(np.sum(a))


def _overlaps_ok(patterns: BinaryArray, min_overlap: float) -> bool:
    if len(patterns) < 2:
        return True
    if len({p.tobytes() for p in patterns}) != len(patterns):
        return False
    for i, a in enumerate(patterns):
        if not any(
            overlap(a, b) >= min_overlap for j, b in enumerate(patterns) if j != i
        ):
            return False
    return True


def generate_patterns(
    n: int,
    n_patterns: int,
    sparsity: float,
    min_overlap: float,
    key: RngStreamKey,
    *,
    require_stable: bool = False,
    field_coding: FieldCoding = "centered",
    max_attempts: int = MAX_PATTERN_ATTEMPTS,
) -> PatternSet:
    """
    Random patterns with exactly ``round(n * (1 - sparsity))`` active units each, every
    one overlapping some other pattern by at least ``min_overlap``.

    With ``require_stable`` the set must also be a fixed point of its own Hopfield
    weights (see :func:`stored_patterns_stable`).

    :raises PatternGenerationError: when no set satisfies the constraints within
        ``max_attempts`` draws.
    """
    if n_patterns < 1:
        raise ConfigurationError("need at least one pattern", key="n_patterns")
    if not 0 <= min_overlap <= 1:
        raise ConfigurationError(
            f"must be in [0, 1], got {min_overlap!r}", key="min_overlap"
        )
    ones = ones_count(n, sparsity)
    rng = key.generator()
    reason = "pairwise overlap below the minimum"
    for _ in range(max_attempts):
        patterns = np.zeros((n_patterns, n), dtype=np.int8)
        for row in patterns:
            row[rng.choice(n, size=ones, replace=False)] = 1
        if not _overlaps_ok(patterns, min_overlap):
            reason = "pairwise overlap below the minimum or repeated patterns"
            continue
        candidate = PatternSet(patterns, sparsity, min_overlap)
        if require_stable and not stored_patterns_stable(
            candidate, hopfield_weights(candidate), field_coding
        ):
            reason = "stored patterns are not fixed points"
            continue
        return candidate
    raise PatternGenerationError(max_attempts, reason)


def hopfield_weights(p: PatternSet) -> WeightMatrix:
    """``w_ij = sum_s (2 V_i^s - 1)(2 V_j^s - 1)`` with ``w_ii = 0``."""
    spins = p.spins.astype(float)
    w = spins.T @ spins
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, np.zeros(p.n))


def _coding(field_coding: FieldCoding, activity: float) -> tuple[float, float]:
    """``(factor, offset)`` such that ``h_i = factor * sum_j w_ij (s_j - offset)``."""
    if field_coding == "spin":
        return 2.0, 0.5
    if field_coding == "binary":
        return 1.0, 0.0
    if field_coding == "centered":
        return 1.0, activity
    raise ConfigurationError(
        f"unknown field coding {field_coding!r}", key="field_coding"
    )


def local_fields(
    w: FloatArray,
    state: BinaryArray,
    field_coding: FieldCoding = "centered",
    activity: float = 0.5,
) -> FloatArray:
    """
    Net input of every unit: ``sum_j w_ij (s_j - activity)`` in centered coding,
    ``sum_j w_ij (2 s_j - 1)`` in spin coding and ``sum_j w_ij s_j`` in binary coding.
    """
    factor, offset = _coding(field_coding, activity)
    s = np.asarray(state, dtype=float)
    return factor * (w @ s - offset * w.sum(axis=1))


def stored_patterns_stable(
    p: PatternSet, weights: WeightMatrix, field_coding: FieldCoding = "centered"
) -> bool:
    """
    Each pattern reproduces itself under the zero-temperature rule: active units see a
    strictly positive field, silent ones a non-positive field in binary coding and a
    strictly negative one otherwise. Centered coding uses the activity of ``p``.
    """
    for pattern in p.patterns:
        h = local_fields(weights.w, pattern, field_coding, p.activity)
        on = pattern == 1
        if not (h[on] > 0).all():
            return False
        if field_coding == "binary":
            if not (h[~on] <= 0).all():
                return False
        elif not (h[~on] < 0).all():
            return False
    return True


def default_weight_scale(
    p: PatternSet, field_coding: FieldCoding = "centered"
) -> float:
    """
    Inverse of the field a stored pattern contributes to its own units, averaged over
    the patterns.

    With this scale every unit sits at a field of +-1 in its stored pattern, up to
    crosstalk from the other patterns: ``1 / N`` in spin coding,
    ``1 / (2 a (1 - a) N)`` in centered coding with activity ``a``.
    """
    factor, offset = _coding(field_coding, p.activity)
    own = factor * np.sum(p.spins * (p.patterns - offset), axis=1)
    return 1.0 / float(np.mean(own))


def correlate(state: BinaryArray, p: PatternSet) -> FloatArray:
    """``m_s = (1/N) sum_i (2 s_i - 1)(2 V_i^s - 1)`` for every stored pattern."""
    state = np.asarray(state)
    if state.shape != (p.n,):
        raise ValueError(f"state has shape {state.shape}, patterns have {p.n} units")
    return p.spins @ (2 * state.astype(int) - 1) / p.n


def calibrate_regime(
    params: NeuronParams,
    noise: NoiseConfig,
    window: float,
    n_trials: int,
    key: RngStreamKey,
    *,
    gamma: float = 3.0,
    grid_points: int = 25,
    dt: float = DEFAULT_DT,
) -> RegimeCalibration:
    """
    Measure the transfer curve of a regime around its analytic midpoint and fit it.

    The grid spans six analytic temperatures on both sides of the analytic midpoint.
    """
    if noise.is_silent:
        return RegimeCalibration(params.R * window_threshold(params, window, dt), None)
    estimate = temperature_analytic(params, noise, gamma, window)
    half_width = 6.0 * estimate.t_analytic / params.R
    grid = np.linspace(
        estimate.analytic_midpoint - half_width,
        estimate.analytic_midpoint + half_width,
        grid_points,
    )
    curve = measure_transfer(params, noise, grid, n_trials, window, key, dt)
    fit = fit_logistic(curve)
    return RegimeCalibration(params.R * fit.midpoint, fit.temperature)


def spiking_map(
    weights: WeightMatrix,
    calibration: RegimeCalibration,
    params: NeuronParams,
    temperature: float,
    weight_scale: float,
    field_coding: FieldCoding = "centered",
    activity: float = 0.5,
) -> WeightMatrix:
    """
    Currents and pulse amplitudes that make each spiking unit turn on with probability
    ``1 / (1 + exp(-weight_scale * h_i / temperature))``, ``h_i`` as in
    :func:`local_fields`.

    With ``h_i = f sum_j w_ij (s_j - o)`` and ``g = weight_scale * T_fit / (R *
    temperature)``, the bias is ``c / R - f g o sum_j w_ij`` and the pulses are
    ``f g w_ij``. A silent regime has no temperature of its own and takes
    ``T_fit = temperature``.
    """
    if not temperature > 0:
        raise ConfigurationError(
            f"must be positive, got {temperature!r}", key="temperature"
        )
    factor, offset = _coding(field_coding, activity)
    t_fit = calibration.temperature or temperature
    gain = factor * weight_scale * t_fit / (params.R * temperature)
    bias = calibration.midpoint / params.R - gain * offset * weights.w.sum(axis=1)
    return WeightMatrix(gain * weights.w, bias)


def boltzmann_oracle(
    weights: WeightMatrix,
    temperature: float,
    weight_scale: float,
    state: BinaryArray,
    field_coding: FieldCoding = "centered",
    activity: float = 0.5,
) -> TwoStateNetwork:
    """Two-state machine equivalent to :func:`spiking_map`'s network."""
    factor, offset = _coding(field_coding, activity)
    w = factor * weight_scale * weights.w
    thresholds = offset * w.sum(axis=1)
    return TwoStateNetwork(w, thresholds, temperature, np.asarray(state, dtype=np.int8))


def correlation_trace(states: Sequence[CycleState], p: PatternSet) -> CorrelationTrace:
    cycles = np.array([state.k for state in states], dtype=int)
    if not states:
        return CorrelationTrace(cycles, np.zeros((0, len(p))))
    return CorrelationTrace(
        cycles, np.stack([correlate(state.s, p) for state in states])
    )


def detect_transitions(
    trace: CorrelationTrace,
    threshold: float = 0.6,
    hold: int = 2,
    initial: int | None = None,
) -> tuple[Transition, ...]:
    """
    Changes of the dominant pattern.

    A pattern becomes dominant once it has been the best match, with a correlation above
    ``threshold``, for ``hold`` consecutive cycles. A transition is logged at the first
    cycle of the qualifying run. ``initial`` is the pattern dominant before the trace
    starts; without it the first dominant pattern is not a transition.
    """
    if hold < 1:
        raise ConfigurationError(f"must be at least 1, got {hold}", key="hold")
    transitions = []
    current = initial
    candidate: int | None = None
    run_start = 0
    run_length = 0
    for cycle, best, value in zip(trace.cycles, trace.argmax, trace.max_correlation):
        if value <= threshold:
            candidate, run_length = None, 0
            continue
        if best != candidate:
            candidate, run_start, run_length = int(best), int(cycle), 0
        run_length += 1
        if run_length == hold and candidate != current:
            if current is not None:
                transitions.append(Transition(run_start, current, candidate))
            current = candidate
    return tuple(transitions)


def run_boltzmann(
    patterns: PatternSet,
    noise: NoiseConfig,
    cfg: RhythmConfig,
    params: NeuronParams,
    n_cycles: int,
    key: RngStreamKey,
    *,
    calibration: RegimeCalibration,
    temperature: float = DEFAULT_TEMPERATURE,
    weight_scale: float | None = None,
    field_coding: FieldCoding = "centered",
    initial_pattern: int = 0,
    threshold: float = 0.6,
    hold: int = 2,
    dt: float = DEFAULT_DT,
) -> BoltzmannRun:
    """
    Run the spiking Boltzmann machine from one stored pattern and track which pattern
    the network state resembles.

    ``weight_scale`` defaults to :func:`default_weight_scale`.
    """
    if not 0 <= initial_pattern < len(patterns):
        raise ConfigurationError(
            f"no stored pattern {initial_pattern}", key="initial_pattern"
        )
    if weight_scale is None:
        weight_scale = default_weight_scale(patterns, field_coding)
    weights = spiking_map(
        hopfield_weights(patterns),
        calibration,
        params,
        temperature,
        weight_scale,
        field_coding,
        patterns.activity,
    )
    run = run_network(
        weights,
        cfg,
        noise,
        params,
        n_cycles,
        key,
        CycleState(0, patterns.patterns[initial_pattern]),
        dt=dt,
    )
    trace = correlation_trace(run.states, patterns)
    transitions = detect_transitions(trace, threshold, hold, initial_pattern)
    return BoltzmannRun(trace, transitions, run, weights)


def flip_statistics(
    states: Sequence[BinaryArray],
    oracle: TwoStateNetwork,
    bins: int = 10,
) -> FlipStatistics:
    """
    Compare the units' on-frequencies with the oracle's logistic probabilities given
    the previous state, pooled over all units and cycles and binned by prediction.
    """
    predicted_all = []
    observed_all = []
    for previous, current in zip(states, states[1:]):
        probabilities = oracle.with_state(np.asarray(previous)).flip_probabilities()
        predicted_all.append(probabilities)
        observed_all.append(np.asarray(current, dtype=float))
    if not predicted_all:
        empty = np.zeros(bins)
        return FlipStatistics(empty, empty, np.zeros(bins, dtype=int))
    predicted = np.concatenate(predicted_all)
    observed = np.concatenate(observed_all)
    index = np.minimum((predicted * bins).astype(int), bins - 1)
    counts = np.bincount(index, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_predicted = np.bincount(index, weights=predicted, minlength=bins) / counts
        mean_observed = np.bincount(index, weights=observed, minlength=bins) / counts
    return FlipStatistics(
        np.nan_to_num(mean_predicted), np.nan_to_num(mean_observed), counts
    )

