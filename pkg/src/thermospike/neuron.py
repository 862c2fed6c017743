from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import numpy.typing as npt

from .errors import ConfigurationError
from .errors import SimulationFault
from .noise import impulse_grid

# Default integration step in ms.
DEFAULT_DT = 0.01

Impulse = tuple[float, float]
FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class NeuronParams:
    """
    Leaky integrate-and-fire neuron with a spike adaptation current.

    Times are in ms; potentials, currents and the resistance are in the dimensionless
    units where ``R * I`` is a potential.
    """

    tau_m: float = 2.0
    u_rest: float = 0.0
    u_thresh: float = 1.0
    R: float = 1.0
    tau_alpha: float = 15.0
    delta_alpha: float = 120.0

    def __post_init__(self) -> None:
        for name in ("tau_m", "tau_alpha", "R"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(
                    f"must be positive, got {getattr(self, name)!r}", key=name
                )
        if not self.u_thresh > self.u_rest:
            raise ConfigurationError(
                f"threshold {self.u_thresh} must be above rest {self.u_rest}",
                key="u_thresh",
            )
        if self.delta_alpha < 0:
            raise ConfigurationError("must be non-negative", key="delta_alpha")

    @property
    def adaptation_jump(self) -> float:
        """Increment of ``I_alpha`` at each spike (``delta_alpha / tau_alpha``)."""
        return self.delta_alpha / self.tau_alpha

    @classmethod
    def with_adaptation_for(
        cls, window: float, max_drive: float, **kwargs: float
    ) -> NeuronParams:
        """
        Neuron whose adaptation silences it for the rest of the window after a spike:
        ``tau_alpha = window`` and ``R * delta_alpha / tau_alpha = 2 * max_drive``.
        """
        resistance = kwargs.get("R", 1.0)
        return cls(
            tau_alpha=window,
            delta_alpha=2.0 * max_drive * window / resistance,
            **kwargs,
        )


@dataclass(frozen=True)
class NeuronState:
    u: float
    i_alpha: float = 0.0
    t: float = 0.0
    last_spike: float | None = None
    spiked_in_window: bool = False

    @classmethod
    def at_rest(cls, params: NeuronParams) -> NeuronState:
        return cls(u=params.u_rest)


@dataclass(frozen=True)
class WindowResult:
    """
    Outcome of one window: ``on`` is the binary event "spiked at least once".
    """

    on: bool
    spike_times: tuple[float, ...]
    trace: FloatArray | None = field(default=None, compare=False)
    dt: float = field(default=DEFAULT_DT, compare=False)

    @property
    def trace_times(self) -> FloatArray:
        assert self.trace is not None
        return np.arange(len(self.trace), dtype=float) * self.dt


@dataclass(frozen=True)
class WindowBatch:
    """
    Result of many independent windows simulated together, one per column.

    ``spikes`` holds ``(column, time)`` pairs ordered by time, then column.
    """

    on: npt.NDArray[np.bool_]
    spikes: tuple[tuple[int, float], ...]
    trace: FloatArray | None = None


@dataclass(frozen=True)
class _Propagator:
    """
    Exact one-step solution of the membrane and adaptation equations for a constant
    drive: ``u' = u_inf + (u - u_inf) * decay + coupling * i_alpha``.
    """

    decay: float
    adaptation_decay: float
    coupling: float

    @classmethod
    def create(cls, params: NeuronParams, dt: float) -> _Propagator:
        decay = math.exp(-dt / params.tau_m)
        adaptation_decay = math.exp(-dt / params.tau_alpha)
        if math.isclose(params.tau_alpha, params.tau_m):
            coupling = -params.R * (dt / params.tau_m) * decay
        else:
            coupling = (
                -params.R
                * params.tau_alpha
                / (params.tau_alpha - params.tau_m)
                * (adaptation_decay - decay)
            )
        return cls(decay, adaptation_decay, coupling)


def charge_to_jump(params: NeuronParams, charge: float) -> float:
    """
    Membrane jump caused by a delta current of the given charge (``R * q / tau_m``).

    The simulator applies impulses as direct membrane jumps; this converts the
    charge reading of the input equation into that form.
    """
    return params.R * charge / params.tau_m


def bandgap(params: NeuronParams, i_const: float) -> float:
    """Additional input needed to spike within the window, ``u_t - R * I_o``."""
    return params.u_thresh - params.R * i_const


def grid_size(window: float, dt: float) -> int:
    if not window > 0:
        raise ConfigurationError(f"window must be positive, got {window!r}", key="T_W")
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt!r}", key="dt")
    n = int(round(window / dt))
    if n < 2:
        raise ConfigurationError(
            f"window {window} ms holds less than two steps of {dt} ms", key="dt"
        )
    return n


def window_threshold(
    params: NeuronParams, window: float, dt: float = DEFAULT_DT
) -> float:
    """
    Constant drive above which a noiseless neuron starting at rest spikes in the window.

    The last threshold check of a window happens at ``T_W - dt`` (the window end belongs
    to the inhibited phase), hence the ``-dt``.
    """
    n = grid_size(window, dt)
    last_check = (n - 1) * dt
    return (params.u_thresh - params.u_rest) / (
        params.R * (1.0 - math.exp(-last_check / params.tau_m))
    )


def step(
    params: NeuronParams,
    state: NeuronState,
    i_const: float,
    impulses: Sequence[Impulse],
    dt: float,
) -> NeuronState:
    """
    Advance a single neuron from ``state.t`` to ``state.t + dt``.

    :param impulses:
        ``(time, jump)`` pairs with times in ``(t, t + dt]``; they are applied at the end
        of the step, where the threshold is checked.
    :raises SimulationFault: if the state becomes non-finite.
    """
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt!r}", key="dt")
    t_next = state.t + dt
    prop = _Propagator.create(params, dt)
    u_inf = params.u_rest + params.R * i_const
    u = u_inf + (state.u - u_inf) * prop.decay + prop.coupling * state.i_alpha
    i_alpha = state.i_alpha * prop.adaptation_decay
    for time, jump in impulses:
        if not state.t < time <= t_next + 1e-12:
            raise ValueError(f"impulse at {time} outside of ({state.t}, {t_next}]")
        u += jump

    if not (math.isfinite(u) and math.isfinite(i_alpha)):
        raise SimulationFault(
            f"non-finite neuron state at t={t_next}: u={u}, I_alpha={i_alpha}"
        )

    if u > params.u_thresh:
        return NeuronState(
            u=params.u_rest,
            i_alpha=i_alpha + params.adaptation_jump,
            t=t_next,
            last_spike=t_next,
            spiked_in_window=True,
        )
    return replace(state, u=u, i_alpha=i_alpha, t=t_next)


def simulate_windows(
    params: NeuronParams,
    drive: FloatArray,
    jumps: FloatArray | None,
    window: float,
    dt: float = DEFAULT_DT,
    *,
    record_trace: bool = False,
) -> WindowBatch:
    """
    Simulate independent windows, one per column, all starting at rest.

    :param drive:
        Constant current per column, shape ``(M,)``, or a per-step current of shape
        ``(N, M)`` where row ``n`` is the current between grid points ``n`` and ``n + 1``.
    :param jumps:
        Summed membrane jumps per grid point, shape ``(N + 1, M)`` (see
        :func:`thermospike.noise.impulse_grid`), or ``None``.
    :param record_trace:
        Keep the sampled membrane potential (shape ``(N, M)``); spikes show as a
        one-sample excursion to ``2 * u_t``.
    """
    n_steps = grid_size(window, dt)
    drive = np.asarray(drive, dtype=float)
    per_step = drive.ndim == 2
    n_columns = drive.shape[-1]
    if per_step and drive.shape[0] < n_steps - 1:
        raise ValueError(
            f"drive has {drive.shape[0]} rows, expected at least {n_steps - 1}"
        )
    if jumps is not None and jumps.shape != (n_steps + 1, n_columns):
        raise ValueError(
            f"jumps grid has shape {jumps.shape}, expected {(n_steps + 1, n_columns)}"
        )

    prop = _Propagator.create(params, dt)
    u = np.full(n_columns, params.u_rest, dtype=float)
    i_alpha = np.zeros(n_columns, dtype=float)
    on = np.zeros(n_columns, dtype=bool)
    spikes: list[tuple[int, float]] = []
    trace = np.empty((n_steps, n_columns)) if record_trace else None
    if trace is not None:
        trace[0] = u

    u_inf = params.u_rest + params.R * drive
    for n in range(1, n_steps):
        target = u_inf[n - 1] if per_step else u_inf
        u = target + (u - target) * prop.decay + prop.coupling * i_alpha
        i_alpha *= prop.adaptation_decay
        if jumps is not None:
            u += jumps[n]
        fired = u > params.u_thresh
        if fired.any():
            t = n * dt
            spikes.extend((int(column), t) for column in np.flatnonzero(fired))
            on |= fired
            u[fired] = params.u_rest
            i_alpha[fired] += params.adaptation_jump
        if trace is not None:
            trace[n] = np.where(fired, 2.0 * params.u_thresh, u)

    if not (np.isfinite(u).all() and np.isfinite(i_alpha).all()):
        raise SimulationFault(
            "non-finite neuron state at the end of the window, check the parameters"
        )
    return WindowBatch(on=on, spikes=tuple(spikes), trace=trace)


def simulate_window(
    params: NeuronParams,
    i_const: float,
    impulses: Sequence[Impulse],
    window: float,
    dt: float = DEFAULT_DT,
    *,
    record_trace: bool = False,
) -> WindowResult:
    """
    Simulate one window from rest and return its binary outcome.
    """
    n_steps = grid_size(window, dt)
    jumps = impulse_grid([impulses], n_steps, dt) if impulses else None
    batch = simulate_windows(
        params,
        np.array([i_const], dtype=float),
        jumps,
        window,
        dt,
        record_trace=record_trace,
    )
    return WindowResult(
        on=bool(batch.on[0]),
        spike_times=tuple(t for _, t in batch.spikes),
        trace=None if batch.trace is None else batch.trace[:, 0],
        dt=dt,
    )


def membrane_trace(
    params: NeuronParams,
    i_const: float,
    impulses: Sequence[Impulse],
    window: float,
    dt: float = DEFAULT_DT,
) -> tuple[FloatArray, FloatArray]:
    """
    Sampled membrane potential of one window as ``(times, u)``.

    Spike samples are drawn at ``2 * u_t`` so they stand out in plots.
    """
    result = simulate_window(params, i_const, impulses, window, dt, record_trace=True)
    assert result.trace is not None
    return result.trace_times, result.trace
