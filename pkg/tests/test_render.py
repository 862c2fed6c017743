from pathlib import Path

import numpy as np
import pytest
import yaml

from thermospike.boltzmann import CorrelationTrace
from thermospike.boltzmann import PatternSet
from thermospike.boltzmann import Transition
from thermospike.network import CycleState
from thermospike.network import RasterEntry
from thermospike.render import PATTERN_TABLE
from thermospike.render import RASTER_TABLE
from thermospike.render import STATE_TABLE
from thermospike.render import TRACE_TABLE
from thermospike.render import TRANSFER_TABLE
from thermospike.render import TRUTH_TABLE
from thermospike.render import RunManifest
from thermospike.render import SampledTrace
from thermospike.render import TableRenderer
from thermospike.render import correlation_table
from thermospike.render import format_cell
from thermospike.render import identity_rows
from thermospike.render import render_yaml
from thermospike.render import write_outputs
from thermospike.thermometry import TransferCurve
from thermospike.thermometry import TransferPoint


def body(text: str) -> list[list[str]]:
    return [line.split("\t") for line in text.splitlines()[2:]]


def test_table_has_comment_and_header_at_top() -> None:
    text = RASTER_TABLE.render([], version="1.2.3", experiment="raster")
    assert text.splitlines() == [
        "# generated by thermospike 1.2.3 (raster)",
        "cycle\tneuron\ttime_ms",
    ]
    assert text.endswith("\n")


def test_transfer_table(file_regression) -> None:
    curve = TransferCurve(
        (
            TransferPoint(0.5, 0.0, 10),
            TransferPoint(0.75, 0.3, 10),
            TransferPoint(1.0, 1.0, 10),
        )
    )
    text = TRANSFER_TABLE.render(curve, version="1.0", experiment="transfer")
    file_regression.check(text, extension=".tsv")


@pytest.mark.parametrize(
    "value, expected",
    [
        (3, "3"),
        (np.int64(3), "3"),
        (True, "1"),
        (np.bool_(False), "0"),
        (0.1, "0.1"),
        (1.0, "1"),
        (np.float64(1 / 3), "0.3333333333"),
        (1e-12, "1e-12"),
        ("0110", "0110"),
    ],
)
def test_format_cell(value, expected: str) -> None:
    assert format_cell(value) == expected


def test_row_width_is_checked() -> None:
    table = TableRenderer(("a", "b"), identity_rows)
    with pytest.raises(ValueError, match="expected 2"):
        table.render([(1, 2, 3)], version="1", experiment="x")


def test_network_tables() -> None:
    raster = [RasterEntry(1, 0, 16.39), RasterEntry(2, 1, 46.0)]
    assert body(RASTER_TABLE.render(raster, version="1", experiment="raster")) == [
        ["1", "0", "16.39"],
        ["2", "1", "46"],
    ]
    states = [CycleState(1, np.array([1, 0, 1]))]
    assert body(STATE_TABLE.render(states, version="1", experiment="raster")) == [
        ["1", "101"]
    ]
    truth = [(0, 1, 1, 1, 1.0, 1)]
    assert body(TRUTH_TABLE.render(truth, version="1", experiment="xor")) == [
        ["0", "1", "1", "1", "1", "1"]
    ]


def test_trace_table() -> None:
    trace = SampledTrace(
        "01", 2, np.array([0.0, 0.01]), np.array([0.0, 0.25]), np.array([1.2, 1.2])
    )
    assert body(TRACE_TABLE.render([trace], version="1", experiment="xor")) == [
        ["01", "2", "0", "0", "1.2"],
        ["01", "2", "0.01", "0.25", "1.2"],
    ]


def test_boltzmann_tables() -> None:
    patterns = PatternSet(np.array([[1, 0, 0, 0], [0, 1, 0, 0]]), 0.75, 0.0)
    assert body(PATTERN_TABLE.render(patterns, version="1", experiment="b")) == [
        ["0", "1000"],
        ["1", "0100"],
    ]

    trace = CorrelationTrace(np.array([1, 2]), np.array([[1.0, 0.5], [0.5, 1.0]]))
    table = correlation_table(2)
    assert table.columns == ("cycle", "m_1", "m_2", "argmax", "is_transition")
    text = table.render(
        (trace, (Transition(2, 0, 1),)), version="1", experiment="boltzmann"
    )
    assert body(text) == [["1", "1", "0.5", "0", "0"], ["2", "0.5", "1", "1", "1"]]


def test_render_yaml() -> None:
    text = render_yaml(
        {"b": np.float64(0.5), "a": [np.int64(1), (2, 3)], "c": {"z": np.bool_(True)}}
    )
    assert text.splitlines()[0] == "a:"
    assert yaml.safe_load(text) == {"a": [1, [2, 3]], "b": 0.5, "c": {"z": True}}


def test_manifest() -> None:
    manifest = RunManifest(
        config_hash="abc",
        version="1.0.0",
        seed=3,
        experiment="transfer",
        duration_s=1.23456,
        started_at="2024-01-01T00:00:00+00:00",
        outputs=("summary.yml", "transfer.tsv"),
    )
    assert yaml.safe_load(manifest.render()) == {
        "config_hash": "abc",
        "version": "1.0.0",
        "seed": 3,
        "experiment": "transfer",
        "duration_s": 1.235,
        "started_at": "2024-01-01T00:00:00+00:00",
        "outputs": ["summary.yml", "transfer.tsv"],
    }


def test_write_outputs(tmp_path: Path) -> None:
    names = write_outputs(tmp_path / "out", {"b.tsv": "x\n", "a.yml": "y: 1\n"})
    assert names == ("a.yml", "b.tsv")
    assert (tmp_path / "out" / "b.tsv").read_bytes() == b"x\n"

    with pytest.raises(ValueError, match="empty output file"):
        write_outputs(tmp_path, {"c.tsv": ""})
