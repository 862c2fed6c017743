from __future__ import annotations

from collections.abc import Callable
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any
from typing import NamedTuple
from typing import Union

import numpy as np
import yaml

from .boltzmann import CorrelationTrace
from .boltzmann import PatternSet
from .boltzmann import Transition
from .network import CycleState
from .network import RasterEntry
from .thermometry import TransferCurve

GENERATOR_COMMENT = "generated by thermospike {version} ({experiment})"

Cell = Union[str, int, float, bool, np.integer, np.floating]
Row = Sequence[Cell]


def format_cell(value: Cell) -> str:
    """Integers as integers, floats with ten significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def tsv_comment(line: str) -> str:
    """Make a comment line.

    line: Text to comment. Must not contain newlines.
    """
    return f"# {line}"


class TableRenderer(NamedTuple):
    """Renders a tab-separated table.

    Should be provided the column names and a function turning the data into rows.
    """

    columns: Sequence[str]
    generate_rows: Callable[[Any], Iterable[Row]]
    comment: Callable[[str], str] = tsv_comment

    def render(self, data: Any, *, version: str, experiment: str) -> str:
        """Render the table.

        :param data: The object the rows are generated from.
        :return: The table text, ending with a newline.
        """
        header = GENERATOR_COMMENT.format(version=version, experiment=experiment)
        lines = [
            self.comment(header),
            "\t".join(self.columns),
        ]
        for row in self.generate_rows(data):
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row {row!r} has {len(row)} cells, expected {len(self.columns)}"
                )
            lines.append("\t".join(format_cell(cell) for cell in row))
        return "\n".join(lines) + "\n"


def transfer_rows(curve: TransferCurve) -> Iterable[Row]:
    for point in curve.points:
        yield point.i_o, point.p_spike, point.n_trials


@dataclass(frozen=True, eq=False)
class SampledTrace:
    """A membrane trace labelled by the current or input pair it belongs to."""

    label: str
    neuron: int
    times: np.ndarray
    potential: np.ndarray
    current: np.ndarray


def trace_rows(traces: Sequence[SampledTrace]) -> Iterable[Row]:
    for trace in traces:
        for t, u, i in zip(trace.times, trace.potential, trace.current):
            yield trace.label, trace.neuron, t, u, i


def raster_rows(raster: Sequence[RasterEntry]) -> Iterable[Row]:
    for entry in raster:
        yield entry.cycle, entry.neuron, entry.time


def state_rows(states: Sequence[CycleState]) -> Iterable[Row]:
    for state in states:
        yield state.k, state.bits


def pattern_rows(patterns: PatternSet) -> Iterable[Row]:
    for index, pattern in enumerate(patterns.patterns):
        yield index, "".join(str(int(v)) for v in pattern)


def correlation_rows(
    data: tuple[CorrelationTrace, Sequence[Transition]],
) -> Iterable[Row]:
    trace, transitions = data
    transition_cycles = {t.cycle for t in transitions}
    for cycle, values, best in zip(trace.cycles, trace.correlations, trace.argmax):
        yield (cycle, *values, best, int(cycle) in transition_cycles)


def transition_rows(transitions: Sequence[Transition]) -> Iterable[Row]:
    for transition in transitions:
        yield transition.cycle, transition.from_pattern, transition.to_pattern


def identity_rows(rows: Sequence[Row]) -> Iterable[Row]:
    return rows


TRANSFER_TABLE = TableRenderer(("i_o", "p_spike", "n_trials"), transfer_rows)
TRACE_TABLE = TableRenderer(
    ("label", "neuron", "time_ms", "potential", "current"), trace_rows
)
RASTER_TABLE = TableRenderer(("cycle", "neuron", "time_ms"), raster_rows)
STATE_TABLE = TableRenderer(("cycle", "state"), state_rows)
POPULATION_TABLE = TableRenderer(
    ("cycle", "window_start_ms", "fraction_top", "fraction_bottom", "regime"),
    identity_rows,
)
TRUTH_TABLE = TableRenderer(
    ("in0", "in1", "expected", "output", "p_correct", "trials"), identity_rows
)
PATTERN_TABLE = TableRenderer(("pattern", "bits"), pattern_rows)
TRANSITION_TABLE = TableRenderer(("cycle", "from", "to"), transition_rows)


def correlation_table(n_patterns: int) -> TableRenderer:
    columns = (
        "cycle",
        *(f"m_{s}" for s in range(1, n_patterns + 1)),
        "argmax",
        "is_transition",
    )
    return TableRenderer(columns, correlation_rows)


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def render_yaml(data: Mapping[str, Any]) -> str:
    """Summary documents: plain YAML with sorted keys."""
    return yaml.safe_dump(_plain(data), sort_keys=True, default_flow_style=False)


@dataclass(frozen=True)
class RunManifest:
    """
    What a command produced; the only output that carries timestamps.
    """

    config_hash: str
    version: str
    seed: int
    experiment: str
    duration_s: float
    started_at: str
    outputs: tuple[str, ...]

    def render(self) -> str:
        return render_yaml(
            {
                "config_hash": self.config_hash,
                "version": self.version,
                "seed": self.seed,
                "experiment": self.experiment,
                "duration_s": round(self.duration_s, 3),
                "started_at": self.started_at,
                "outputs": list(self.outputs),
            }
        )


def write_outputs(out_dir: Path, files: Mapping[str, str]) -> tuple[str, ...]:
    """
    Write the rendered files into ``out_dir`` and return their names, sorted.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, contents in files.items():
        if not contents:
            raise ValueError(f"refusing to write empty output file {name}")
        (out_dir / name).write_text(contents, encoding="UTF-8", newline="\n")
    return tuple(sorted(files))
