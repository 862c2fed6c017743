from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy import special
from typing_extensions import Self

from .errors import ConfigurationError
from .neuron import DEFAULT_DT
from .neuron import NeuronParams
from .neuron import grid_size
from .neuron import simulate_windows
from .neuron import window_threshold
from .noise import SILENT
from .noise import NoiseConfig
from .noise import RngStreamKey
from .noise import impulse_grid
from .noise import noise_impulses

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int_]

# Fixed XOR circuit: rows receive, columns send. In0/In1 feed N1 (AND) and N2 (OR);
# N1 inhibits and N2 excites N3.
XOR_INPUT_WEIGHTS = ((0.6, 0.6), (1.2, 1.2), (0.0, 0.0))
XOR_WEIGHTS = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (-1.2, 1.2, 0.0))
XOR_INPUT_DURATION = 30.0


@dataclass(frozen=True)
class RhythmConfig:
    """
    Square-wave inhibitory rhythm: window ``k >= 1`` is the open interval
    ``(T_W + 2 T_W (k - 1), 2 T_W k)``; everything else is inhibited.
    """

    T_W: float = 15.0
    mode: str = "clamp"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T_W) and self.T_W > 0):
            raise ConfigurationError(f"must be positive, got {self.T_W!r}", key="T_W")
        if self.mode != "clamp":
            raise ConfigurationError(
                f"unknown inhibition mode {self.mode!r} (only 'clamp' is supported)",
                key="mode",
            )

    @property
    def frequency_hz(self) -> float:
        return 1000.0 / (2.0 * self.T_W)

    def window_start(self, k: int) -> float:
        return self.T_W * (2 * k - 1)

    def window_end(self, k: int) -> float:
        return 2.0 * self.T_W * k


class Phase(NamedTuple):
    """Rhythm phase of a time point: window index ``k``, ``None`` when inhibited."""

    k: int | None

    @property
    def inhibited(self) -> bool:
        return self.k is None


def rhythm_phase(t: float, cfg: RhythmConfig) -> Phase:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    m = t / cfg.T_W
    whole = math.floor(m)
    if m == whole or whole % 2 == 0:
        return Phase(None)
    return Phase((whole + 1) // 2)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """
    Synaptic weights ``w[j, p]`` (neuron ``j`` receives from ``p``) and the constant
    external current ``i_o`` of each neuron.
    """

    w: FloatArray
    i_o: FloatArray

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        i_o = np.asarray(self.i_o, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigurationError(
                f"weights must be square, got shape {w.shape}", key="weights"
            )
        if i_o.shape != (w.shape[0],):
            raise ConfigurationError(
                f"need one external current per neuron, got shape {i_o.shape} for "
                f"{w.shape[0]} neurons",
                key="i_o",
            )
        if not (np.isfinite(w).all() and np.isfinite(i_o).all()):
            raise ConfigurationError(
                "weights and currents must be finite", key="weights"
            )
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "i_o", i_o)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def unconnected(cls, i_o: Sequence[float]) -> Self:
        return cls(np.zeros((len(i_o), len(i_o))), np.asarray(i_o, dtype=float))


@dataclass(frozen=True)
class SynapticPulse:
    """Rectangular current pulse of ``amplitude`` on ``[onset, offset)``."""

    source: int
    target: int
    onset: float
    offset: float
    amplitude: float

    def active(self, t: float) -> bool:
        return self.onset <= t < self.offset


def pulse_interval(t_f: float, window: float) -> tuple[float, float]:
    """Delayed pulse of a spike at ``t_f``: active on ``[t_f + T_W, t_f + 3 T_W)``."""
    return t_f + window, t_f + 3.0 * window


def schedule_pulse(
    spike: tuple[int, float], weights: WeightMatrix, window: float
) -> list[SynapticPulse]:
    """
    Pulses sent by ``spike = (p, t_f)`` to every neuron ``j`` with ``w[j, p] != 0``.
    """
    source, t_f = spike
    onset, offset = pulse_interval(t_f, window)
    return [
        SynapticPulse(
            source, int(target), onset, offset, float(weights.w[target, source])
        )
        for target in np.flatnonzero(weights.w[:, source])
    ]


@dataclass(frozen=True, eq=False)
class CycleState:
    """Binary events of cycle ``k``: ``s[p] == 1`` when neuron ``p`` spiked in it."""

    k: int
    s: npt.NDArray[np.int8]

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=np.int8)
        if s.ndim != 1 or not np.isin(s, (0, 1)).all():
            raise ValueError(f"cycle state must be a binary vector, got {self.s!r}")
        object.__setattr__(self, "s", s)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CycleState):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.s, other.s)

    @property
    def bits(self) -> str:
        return "".join(str(int(v)) for v in self.s)


@dataclass(frozen=True)
class CurrentInjection:
    """Extra constant current into one neuron on ``[start, stop)``."""

    neuron: int
    amplitude: float
    start: float
    stop: float


@dataclass(frozen=True)
class NoiseSwitch:
    at_ms: float
    noise: NoiseConfig


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Background regime over time; a window uses the regime active at its start.
    """

    initial: NoiseConfig
    switches: tuple[NoiseSwitch, ...] = ()

    def __post_init__(self) -> None:
        times = [s.at_ms for s in self.switches]
        if times != sorted(times):
            raise ConfigurationError(
                "noise switches must be ordered in time", key="switch"
            )

    def regime_index(self, t: float) -> int:
        return sum(1 for s in self.switches if s.at_ms <= t)

    def at(self, t: float) -> NoiseConfig:
        index = self.regime_index(t)
        return self.initial if index == 0 else self.switches[index - 1].noise


class RasterEntry(NamedTuple):
    cycle: int
    neuron: int
    time: float


@dataclass(frozen=True, eq=False)
class WindowTrace:
    """
    Membrane potential and input current of every neuron over one window, sampled at
    ``start + n * dt``; ``current[n]`` is the drive on ``(t_n, t_n+1)``.
    """

    k: int
    start: float
    dt: float
    potential: FloatArray
    current: FloatArray

    @property
    def times(self) -> FloatArray:
        return self.start + np.arange(self.potential.shape[0]) * self.dt


@dataclass(frozen=True, eq=False)
class NetworkRun:
    states: tuple[CycleState, ...]
    raster: tuple[RasterEntry, ...]
    traces: tuple[WindowTrace, ...] = field(default=())

    def state_matrix(self) -> npt.NDArray[np.int8]:
        """Binary states stacked as ``(n_cycles, n)``."""
        if not self.states:
            return np.zeros((0, 0), dtype=np.int8)
        return np.stack([state.s for state in self.states])


def _window_drive(
    weights: WeightMatrix,
    spike_sources: IntArray,
    spike_times: FloatArray,
    injections: Sequence[CurrentInjection],
    midpoints: FloatArray,
    window: float,
) -> FloatArray:
    """Per-step current ``(steps, n)`` evaluated at the step midpoints."""
    drive = np.broadcast_to(weights.i_o, (len(midpoints), weights.n)).copy()
    if len(spike_sources):
        onset = spike_times + window
        offset = spike_times + 3.0 * window
        t = midpoints[:, None]
        active = (onset[None, :] <= t) & (t < offset[None, :])
        drive += active.astype(float) @ weights.w[:, spike_sources].T
    for injection in injections:
        on = (injection.start <= midpoints) & (midpoints < injection.stop)
        drive[on, injection.neuron] += injection.amplitude
    return drive


def run_network(
    weights: WeightMatrix,
    cfg: RhythmConfig,
    noise: NoiseConfig | NoiseSchedule,
    params: NeuronParams,
    n_cycles: int,
    key: RngStreamKey,
    initial: CycleState | None = None,
    *,
    injections: Sequence[CurrentInjection] = (),
    dt: float = DEFAULT_DT,
    record_trace: bool = False,
) -> NetworkRun:
    """
    Run the clocked spiking network for ``n_cycles`` windows.

    During each window every neuron integrates its external current, the delayed pulses
    of the previous window's spikes, any current injections and its own Poisson
    background, drawn with ``key.with_(neuron=key.neuron + j, trial=k)``. Inhibited
    phases clamp membrane and adaptation to rest, so each window starts from rest.

    ``initial`` holds the state of a virtual window 0; its active neurons send pulses
    into window 1 as if they had spiked in the middle of that window.
    """
    if n_cycles < 1:
        raise ConfigurationError(
            f"need at least one cycle, got {n_cycles}", key="cycles"
        )
    schedule = noise if isinstance(noise, NoiseSchedule) else NoiseSchedule(noise)
    n = weights.n
    window = cfg.T_W
    n_steps = grid_size(window, dt)
    local_midpoints = (np.arange(n_steps) + 0.5) * dt

    spike_sources = np.zeros(0, dtype=int)
    spike_times = np.zeros(0)
    if initial is not None:
        if len(initial.s) != n:
            raise ValueError(
                f"initial state has {len(initial.s)} entries, expected {n}"
            )
        spike_sources = np.flatnonzero(initial.s)
        spike_times = np.full(len(spike_sources), -window / 2.0)

    states = []
    raster: list[RasterEntry] = []
    traces = []
    for k in range(1, n_cycles + 1):
        start = cfg.window_start(k)
        alive = spike_times + 3.0 * window > start
        spike_sources, spike_times = spike_sources[alive], spike_times[alive]

        drive = _window_drive(
            weights,
            spike_sources,
            spike_times,
            injections,
            start + local_midpoints,
            window,
        )
        regime = schedule.at(start)
        jumps = None
        if not regime.is_silent and n > 0:
            trains = [
                noise_impulses(
                    regime, window, key.with_(neuron=key.neuron + j, trial=k)
                )
                for j in range(n)
            ]
            jumps = impulse_grid(trains, n_steps, dt)

        batch = simulate_windows(
            params, drive, jumps, window, dt, record_trace=record_trace
        )
        states.append(CycleState(k, batch.on.astype(np.int8)))
        raster.extend(RasterEntry(k, column, start + t) for column, t in batch.spikes)
        # A window sends one pulse per active neuron, timed by its first spike.
        first: dict[int, float] = {}
        for column, t in batch.spikes:
            first.setdefault(column, start + t)
        new_sources = list(first)
        new_times = list(first.values())
        spike_sources = np.concatenate(
            [spike_sources, np.asarray(new_sources, dtype=int)]
        )
        spike_times = np.concatenate([spike_times, np.asarray(new_times, dtype=float)])
        if batch.trace is not None:
            traces.append(WindowTrace(k, start, dt, batch.trace, drive))

    return NetworkRun(tuple(states), tuple(raster), tuple(traces))


@dataclass(frozen=True, eq=False)
class TwoStateNetwork:
    """
    Synchronous network of binary threshold units with logistic noise.

    ``x_j = sum_p w[j, p] s_p`` and ``s_j = 1`` with probability
    ``1 / (1 + exp(-(x_j - thresholds[j]) / temperature))``; at zero temperature the
    rule is ``s_j = 1`` iff ``x_j > thresholds[j]``.
    """

    w: FloatArray
    thresholds: FloatArray
    temperature: float
    state: npt.NDArray[np.int8]

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigurationError(
                "temperature must be non-negative", key="temperature"
            )
        n = len(self.state)
        if self.w.shape != (n, n) or self.thresholds.shape != (n,):
            raise ValueError(
                f"inconsistent shapes: w {self.w.shape}, thresholds "
                f"{self.thresholds.shape}, state ({n},)"
            )

    @classmethod
    def equivalent_of(
        cls,
        weights: WeightMatrix,
        params: NeuronParams,
        window: float,
        state: npt.NDArray[np.int8],
        temperature: float = 0.0,
        dt: float = DEFAULT_DT,
    ) -> Self:
        """
        Two-state counterpart of a spiking network: ``x_t = window_threshold - I_o``.
        """
        thresholds = window_threshold(params, window, dt) - weights.i_o
        return cls(weights.w, thresholds, temperature, np.asarray(state, dtype=np.int8))

    def with_state(self, state: npt.NDArray[np.int8]) -> Self:
        return type(self)(self.w, self.thresholds, self.temperature, state)

    def flip_probabilities(self) -> FloatArray:
        x = self.w @ self.state
        if self.temperature == 0:
            return (x > self.thresholds).astype(float)
        return special.expit((x - self.thresholds) / self.temperature)


def two_state_step(net: TwoStateNetwork, key: RngStreamKey) -> npt.NDArray[np.int8]:
    """One synchronous update of every unit from the previous state."""
    if net.temperature == 0:
        return (net.w @ net.state > net.thresholds).astype(np.int8)
    draws = key.generator().random(len(net.state))
    return (draws < net.flip_probabilities()).astype(np.int8)


def run_two_state(
    net: TwoStateNetwork, n_steps: int, key: RngStreamKey
) -> list[npt.NDArray[np.int8]]:
    """States after each of ``n_steps`` updates; step ``k`` draws with ``trial=k``."""
    trajectory = []
    for k in range(1, n_steps + 1):
        net = net.with_state(two_state_step(net, key.with_(trial=k)))
        trajectory.append(net.state)
    return trajectory


@dataclass(frozen=True, eq=False)
class XorCircuit:
    """
    Feed-forward XOR: the two input bits drive N1 and N2 as currents during the first
    window (``input_weights`` is ``3 x 2``), and ``weights`` connects N1..N3.
    """

    input_weights: FloatArray
    weights: WeightMatrix
    input_duration: float = XOR_INPUT_DURATION

    def __post_init__(self) -> None:
        input_weights = np.asarray(self.input_weights, dtype=float)
        if input_weights.shape != (3, 2):
            raise ConfigurationError(
                f"need a 3 x 2 matrix, got shape {input_weights.shape}",
                key="input_weights",
            )
        if self.weights.n != 3:
            raise ConfigurationError(
                f"the circuit has 3 neurons, got {self.weights.n}", key="weights"
            )
        object.__setattr__(self, "input_weights", input_weights)

    @classmethod
    def default(cls) -> Self:
        return cls(
            np.array(XOR_INPUT_WEIGHTS),
            WeightMatrix(np.array(XOR_WEIGHTS), np.zeros(3)),
        )

    def injections(self, inputs: tuple[int, int]) -> list[CurrentInjection]:
        return [
            CurrentInjection(neuron, float(weight) * bit, 0.0, self.input_duration)
            for neuron, row in enumerate(self.input_weights)
            for weight, bit in zip(row, inputs)
            if weight * bit != 0
        ]


def _check_bits(inputs: tuple[int, int]) -> None:
    if len(inputs) != 2 or any(bit not in (0, 1) for bit in inputs):
        raise ConfigurationError(
            f"XOR inputs must be two bits, got {inputs!r}", key="inputs"
        )


def simulate_xor(
    inputs: tuple[int, int],
    circuit: XorCircuit | None = None,
    *,
    params: NeuronParams | None = None,
    cfg: RhythmConfig | None = None,
    noise: NoiseConfig = SILENT,
    key: RngStreamKey | None = None,
    dt: float = DEFAULT_DT,
    record_trace: bool = False,
) -> NetworkRun:
    """Two cycles of the XOR circuit for one input pair."""
    _check_bits(inputs)
    circuit = circuit or XorCircuit.default()
    return run_network(
        circuit.weights,
        cfg or RhythmConfig(),
        noise,
        params or NeuronParams(),
        2,
        key or RngStreamKey(0),
        injections=circuit.injections(inputs),
        dt=dt,
        record_trace=record_trace,
    )


def run_xor(
    inputs: tuple[int, int],
    circuit: XorCircuit | None = None,
    *,
    params: NeuronParams | None = None,
    cfg: RhythmConfig | None = None,
    noise: NoiseConfig = SILENT,
    key: RngStreamKey | None = None,
    dt: float = DEFAULT_DT,
) -> int:
    """Output bit of the XOR circuit: N3's event in the second window."""
    run = simulate_xor(
        inputs, circuit, params=params, cfg=cfg, noise=noise, key=key, dt=dt
    )
    return int(run.states[1].s[2])


def xor_oracle_network(
    inputs: tuple[int, int],
    circuit: XorCircuit | None = None,
    params: NeuronParams | None = None,
    window: float = 15.0,
    dt: float = DEFAULT_DT,
) -> TwoStateNetwork:
    """
    Two-state version of the XOR circuit with the inputs as units 0 and 1 and N1..N3 as
    units 2..4; the output is unit 4 after two steps.
    """
    _check_bits(inputs)
    circuit = circuit or XorCircuit.default()
    w = np.zeros((5, 5))
    w[2:, :2] = circuit.input_weights
    w[2:, 2:] = circuit.weights.w
    thresholds = np.full(5, window_threshold(params or NeuronParams(), window, dt))
    thresholds[2:] -= circuit.weights.i_o
    state = np.array([*inputs, 0, 0, 0], dtype=np.int8)
    return TwoStateNetwork(w, thresholds, 0.0, state)
