from __future__ import annotations

import math
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import replace
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from typing_extensions import Self

from .errors import ConfigurationError

FloatArray = npt.NDArray[np.float64]


class Source(Enum):
    """Origin of a random stream, part of its key."""

    Excitatory = 0
    Inhibitory = 1
    Other = 2


@dataclass(frozen=True)
class RngStreamKey:
    """
    Identifies an independent random stream: ``(seed, neuron, source, trial)``.

    Streams come from NumPy's counter-based Philox generator seeded with a
    ``SeedSequence`` whose spawn key is ``(neuron, source, trial)``, so a stream never
    depends on which other streams were drawn before it.
    """

    seed: int
    neuron: int = 0
    source: Source = Source.Other
    trial: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "neuron", "trial"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    def with_(self, **changes: object) -> Self:
        return replace(self, **changes)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            int(self.seed),
            spawn_key=(int(self.neuron), self.source.value, int(self.trial)),
        )
        return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class NoiseConfig:
    """
    Poisson background input: rates in Hz, weights as direct membrane jumps.
    """

    lambda_e: float = 0.0
    lambda_i: float = 0.0
    w_e: float = 0.1
    w_i: float = 0.1

    def __post_init__(self) -> None:
        for name in ("lambda_e", "lambda_i", "w_e", "w_i"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(
                    f"must be finite and non-negative, got {value!r}", key=name
                )

    @property
    def is_silent(self) -> bool:
        return (self.lambda_e == 0 or self.w_e == 0) and (
            self.lambda_i == 0 or self.w_i == 0
        )

    def scaled(self, factor: float) -> Self:
        """Same weights with both rates multiplied by ``factor``."""
        return replace(
            self, lambda_e=self.lambda_e * factor, lambda_i=self.lambda_i * factor
        )


SILENT = NoiseConfig()
LOW = NoiseConfig(lambda_e=920.0, lambda_i=0.0)
MID = NoiseConfig(lambda_e=5000.0, lambda_i=6150.0)
HIGH = NoiseConfig(lambda_e=14000.0, lambda_i=17500.0)

REGIMES: Mapping[str, NoiseConfig] = {
    "silent": SILENT,
    "low": LOW,
    "mid": MID,
    "high": HIGH,
}


@dataclass(frozen=True, eq=False)
class PoissonStream:
    """
    Event times (ms) of a homogeneous Poisson process on ``[0, horizon)``.
    """

    events: FloatArray
    key: RngStreamKey | None
    rate: float
    horizon: float

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def empty(cls, horizon: float, key: RngStreamKey | None = None) -> Self:
        return cls(np.empty(0), key, 0.0, horizon)


class ImpulseTrain(NamedTuple):
    """Time-ordered membrane jumps of one input, as parallel arrays."""

    times: FloatArray
    jumps: FloatArray

    def as_list(self) -> list[tuple[float, float]]:
        return [(float(t), float(j)) for t, j in zip(self.times, self.jumps)]

    @classmethod
    def from_list(cls, impulses: Sequence[tuple[float, float]]) -> ImpulseTrain:
        if not impulses:
            return cls(np.empty(0), np.empty(0))
        times, jumps = zip(*impulses)
        return cls(np.asarray(times, dtype=float), np.asarray(jumps, dtype=float))


def generate_poisson(rate: float, horizon: float, key: RngStreamKey) -> PoissonStream:
    """
    Renewal process with exponential gaps of mean ``1/rate``, cut at ``horizon``.

    :param rate: events per second (Hz).
    :param horizon: length of the stream in ms.
    """
    if not (math.isfinite(rate) and rate >= 0):
        raise ValueError(f"rate must be finite and non-negative, got {rate!r}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    if rate == 0:
        return PoissonStream.empty(horizon, key)

    mean_gap = 1000.0 / rate
    expected = horizon / mean_gap
    chunk = int(expected + 5.0 * math.sqrt(expected) + 16)
    rng = key.generator()
    times = np.cumsum(rng.exponential(mean_gap, size=chunk))
    while times[-1] < horizon:
        more = times[-1] + np.cumsum(rng.exponential(mean_gap, size=chunk))
        times = np.concatenate([times, more])
    return PoissonStream(times[times < horizon], key, rate, horizon)


def compose_impulses(
    exc: PoissonStream, inh: PoissonStream, cfg: NoiseConfig
) -> ImpulseTrain:
    """
    Merge both streams into one time-ordered train: ``+w_e`` at excitatory times and
    ``-w_i`` at inhibitory times; on equal times the excitatory event comes first.
    """
    if exc.horizon != inh.horizon:
        raise ValueError(
            f"streams cover different horizons: {exc.horizon} and {inh.horizon}"
        )
    times = np.concatenate([exc.events, inh.events])
    jumps = np.concatenate(
        [np.full(len(exc), cfg.w_e), np.full(len(inh), -cfg.w_i)]
    )
    sources = np.concatenate(
        [np.zeros(len(exc), dtype=int), np.ones(len(inh), dtype=int)]
    )
    order = np.lexsort((sources, times))
    return ImpulseTrain(times[order], jumps[order])


def compose_input(
    i_o: float, exc: PoissonStream, inh: PoissonStream, cfg: NoiseConfig
) -> tuple[float, list[tuple[float, float]]]:
    """
    Split the input current into its constant part and a list of ``(time, jump)``
    impulses.
    """
    return i_o, compose_impulses(exc, inh, cfg).as_list()


def noise_impulses(cfg: NoiseConfig, horizon: float, key: RngStreamKey) -> ImpulseTrain:
    """
    Draw both background streams for ``key`` (its source is replaced) and merge them.
    """
    exc = generate_poisson(
        cfg.lambda_e if cfg.w_e > 0 else 0.0,
        horizon,
        key.with_(source=Source.Excitatory),
    )
    inh = generate_poisson(
        cfg.lambda_i if cfg.w_i > 0 else 0.0,
        horizon,
        key.with_(source=Source.Inhibitory),
    )
    return compose_impulses(exc, inh, cfg)


def impulse_grid(
    columns: Sequence[ImpulseTrain | Sequence[tuple[float, float]]],
    n_steps: int,
    dt: float,
) -> FloatArray:
    """
    Quantize impulses onto the simulation grid, shape ``(n_steps + 1, len(columns))``.

    An impulse at time ``t`` lands on the first grid point at or after ``t``: the
    ceiling, not the nearest grid point, so no impulse acts before its arrival time and
    the spike check at that point sees it. Impulses sharing a grid point add up.
    Impulses outside ``(0, n_steps * dt]`` are dropped.
    """
    grid = np.zeros((n_steps + 1, len(columns)))
    all_rows = []
    all_columns = []
    all_jumps = []
    for column, train in enumerate(columns):
        if not isinstance(train, ImpulseTrain):
            train = ImpulseTrain.from_list(train)
        if len(train.times) == 0:
            continue
        # Rounding first keeps events that sit on the grid at their own grid point.
        rows = np.ceil(np.round(train.times / dt, 9)).astype(int)
        inside = (rows > 0) & (rows <= n_steps)
        all_rows.append(rows[inside])
        all_columns.append(np.full(int(inside.sum()), column))
        all_jumps.append(train.jumps[inside])
    if all_rows:
        np.add.at(
            grid,
            (np.concatenate(all_rows), np.concatenate(all_columns)),
            np.concatenate(all_jumps),
        )
    return grid
