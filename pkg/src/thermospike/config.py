from __future__ import annotations

import collections
import dataclasses
import hashlib
import os
import re
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import replace
from pathlib import Path
from typing import Any
from typing import TypeVar

import numpy as np
import yaml
from typing_extensions import Self

from .errors import ConfigurationError
from .errors import UsageError
from .network import NoiseSchedule
from .network import NoiseSwitch
from .network import RhythmConfig
from .network import WeightMatrix
from .network import XorCircuit
from .neuron import DEFAULT_DT
from .neuron import NeuronParams
from .noise import REGIMES
from .noise import NoiseConfig

_selector_pattern = re.compile(r".*?#\s*\[(.*)\].*")

PRESETS_DIR = Path(__file__).parent / "presets"
EXPERIMENTS = ("transfer", "raster", "xor", "boltzmann", "validate")

YAMLData = dict[str, Any]
T = TypeVar("T")


def preprocess_selector_in_line(line: str) -> str:
    x = _selector_pattern.search(line)
    if x is None:
        return line
    expr = x.group(1).strip()
    return f"{{% if {expr} %}}{line}{{% endif %}}"


def preprocess_selectors(contents: str) -> str:
    lines = [preprocess_selector_in_line(line) for line in contents.split("\n")]
    return "\n".join(lines)


def _min_thermospike_version(min_version: str) -> str:
    """Checks that the current thermospike version is at least the given version"""
    from packaging.version import parse
    import thermospike

    if parse(thermospike.__version__) < parse(min_version):
        raise UsageError(
            f"This file requires at minimum thermospike {min_version}, "
            f"but you have {thermospike.__version__} installed.\n"
            "Please update thermospike.\n"
        )

    return ""


def _get_env(
    var_name: str, default: str | None = None, valid: Sequence[str] | None = None
) -> str:
    """Get env var value or default value and check against allowed values.

    :param var_name:
        Name of the environment variable.
    :param default:
        Default value for the variable. If not specified, the method raises
        an error when the variable is not set.
    :param valid:
        List of allowed values of the variable.
    :return:
        Value of the environment variable or default
    """
    value = os.environ.get(var_name, default)

    if value is None:
        raise UsageError(f"Environment variable {var_name} is not set.")

    if valid is not None and value not in valid:
        raise UsageError(
            f"Allowed values for environment variable {var_name} are {valid}, "
            f"got {value}"
        )

    return value


def render_jinja(contents: str, filename: Path, *, is_included: bool) -> str:
    import jinja2
    import sys
    import platform

    jinja_dict = {
        "get_env": _get_env,
        "is_included": is_included,
        "min_thermospike_version": _min_thermospike_version,
        "os": os,
        "platform": platform,
        "root": os.path.dirname(os.path.abspath(filename)),
        "sys": sys,
    }

    contents = preprocess_selectors(contents)
    try:
        return jinja2.Template(contents).render(**jinja_dict)
    except jinja2.TemplateError as e:
        raise UsageError(f"could not render '{filename}': {e}")


def _safe_load(contents: str, filename: Path) -> Any:
    try:
        return yaml.safe_load(contents)
    except yaml.YAMLError as e:
        raise UsageError(f"could not parse '{filename}': {e}")


def handle_includes(root_filename: Path, root_yaml: YAMLData) -> dict[Path, YAMLData]:
    """
    Loads every file reachable through ``includes:``, depth-first; the result is ordered
    from the root (most downstream) to the deepest include.
    """
    queue = collections.OrderedDict({Path(root_filename).resolve(): root_yaml})
    visited: dict[Path, YAMLData] = collections.OrderedDict()

    if root_yaml is None:
        raise UsageError(f"The root file '{root_filename}' is empty.")

    while queue:
        filename, yaml_dict = queue.popitem()
        if filename in visited:
            continue
        if not isinstance(yaml_dict, dict):
            raise UsageError(
                f"Found '{yaml_dict!r}' when a mapping is expected in '{filename}'."
            )

        for included_filename in yaml_dict.get("includes") or []:
            if Path(included_filename).is_absolute():
                included_filename = Path(included_filename)
            else:
                included_filename = Path(filename).parent / included_filename

            if not included_filename.is_file():
                raise UsageError(
                    f"Couldn't find the file '{included_filename}' "
                    f"while processing the file '{filename}'."
                )
            jinja_contents = render_jinja(
                included_filename.read_text(encoding="UTF-8"),
                included_filename,
                is_included=True,
            )
            included_yaml_dict = _safe_load(jinja_contents, included_filename)
            if included_yaml_dict is None:
                raise UsageError(
                    f"The file '{included_filename}' which was"
                    f" included by '{filename}' is empty."
                )
            queue[included_filename.resolve()] = included_yaml_dict

        if "includes" in yaml_dict:
            del yaml_dict["includes"]

        visited[filename] = yaml_dict

    return visited


def merge(dicts: Iterable[YAMLData]) -> YAMLData:
    """
    Merges upstream-first documents: mappings merge recursively, any other value from a
    later document replaces the earlier one; ``None`` never overrides.
    """
    final_dict: YAMLData = {}

    for d in dicts:
        if not isinstance(d, dict):
            raise UsageError(
                f"Found '{d!r}' when a mapping is expected, check if the "
                "configuration files are properly formatted."
            )
        for key, value in d.items():
            if value is None:
                continue
            if isinstance(value, dict) and isinstance(final_dict.get(key), dict):
                final_dict[key] = merge([final_dict[key], value])
            else:
                final_dict[key] = value

    return final_dict


def load_yaml_dict(filename: Path) -> YAMLData:
    """
    Loads the given configuration file, rendering it and everything it includes.
    """
    contents = Path(filename).read_text(encoding="UTF-8")
    rendered_contents = render_jinja(contents, filename, is_included=False)
    root_yaml = _safe_load(rendered_contents, filename)
    all_yaml_dicts = handle_includes(filename, root_yaml)
    return merge(reversed(list(all_yaml_dicts.values())))


def resolve_config_path(name_or_path: str) -> Path:
    """A config file path, or the name of a bundled preset such as ``fig3``."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    preset = PRESETS_DIR / f"{name_or_path}.yml"
    if preset.is_file():
        return preset
    available = ", ".join(sorted(p.stem for p in PRESETS_DIR.glob("fig*.yml")))
    raise UsageError(
        f'file "{name_or_path}" does not exist and is not a preset '
        f"(presets: {available}, validate)."
    )


def _child(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _rekey(e: ConfigurationError, path: str) -> ConfigurationError:
    if not e.key:
        return ConfigurationError(e.message, key=path)
    if not path or e.key == path or e.key.startswith(f"{path}."):
        return e
    return ConfigurationError(e.message, key=_child(path, e.key))


def _section(data: Any, path: str) -> Mapping[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"expected a mapping, got {data!r}", key=path)
    return data


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", key=path)
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"expected an integer, got {value!r}", key=path)
    return value


def _numbers(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigurationError(f"expected a list of numbers, got {value!r}", key=path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _matrix(value: Any, path: str) -> tuple[tuple[float, ...], ...]:
    if not isinstance(value, list):
        raise ConfigurationError(f"expected a list of rows, got {value!r}", key=path)
    return tuple(_numbers(row, f"{path}[{i}]") for i, row in enumerate(value))


def _build(cls: type[T], data: Any, path: str) -> T:
    """
    Instantiates a flat dataclass from a mapping, coercing each value to the type of the
    field's default and prefixing validation errors with ``path``.
    """
    section = _section(data, path)
    fields = {f.name: f for f in dataclasses.fields(cls)}  # type:ignore[arg-type]
    kwargs: dict[str, Any] = {}
    for key, value in section.items():
        if key not in fields:
            raise ConfigurationError(
                f"unknown key (expected one of {', '.join(fields)})",
                key=_child(path, key),
            )
        default = fields[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigurationError(
                    f"expected true or false, got {value!r}", key=_child(path, key)
                )
            kwargs[key] = value
        elif isinstance(default, int):
            kwargs[key] = _integer(value, _child(path, key))
        elif isinstance(default, float) or default is None:
            kwargs[key] = None if value is None else _number(value, _child(path, key))
        elif isinstance(default, str):
            kwargs[key] = str(value)
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigurationError as e:
        raise _rekey(e, path) from None


def _noise(data: Any, path: str) -> NoiseConfig:
    if isinstance(data, str):
        try:
            return REGIMES[data]
        except KeyError:
            raise ConfigurationError(
                f"unknown regime {data!r} (expected one of {', '.join(REGIMES)}"
                " or a mapping)",
                key=path,
            ) from None
    return _build(NoiseConfig, data, path)


def _grid(data: Any, path: str) -> tuple[float, ...]:
    if isinstance(data, Mapping):
        start = _number(data.get("start"), _child(path, "start"))
        stop = _number(data.get("stop"), _child(path, "stop"))
        step = _number(data.get("step"), _child(path, "step"))
        if not step > 0 or stop < start:
            raise ConfigurationError("need start <= stop and a positive step", key=path)
        count = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(count))
    return _numbers(data, path)


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = DEFAULT_DT
    gamma: float = 3.0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigurationError(f"must be positive, got {self.dt!r}", key="dt")
        if not self.gamma >= 0:
            raise ConfigurationError(
                f"must be non-negative, got {self.gamma!r}", key="gamma"
            )


@dataclass(frozen=True)
class TransferSpec:
    """Constant currents of the transfer curve and of the sample membrane traces."""

    currents: tuple[float, ...]
    trace_currents: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.currents) == 0:
            raise ConfigurationError("need at least one current", key="currents")
        if any(b <= a for a, b in zip(self.currents, self.currents[1:])):
            raise ConfigurationError("must be strictly increasing", key="currents")

    @classmethod
    def from_dict(cls, data: Any, path: str) -> Self:
        section = _section(data, path)
        _reject_unknown(section, ("currents", "trace_currents"), path)
        if "currents" not in section:
            raise ConfigurationError("missing", key=_child(path, "currents"))
        try:
            return cls(
                currents=_grid(section["currents"], _child(path, "currents")),
                trace_currents=_numbers(
                    section.get("trace_currents", []), _child(path, "trace_currents")
                ),
            )
        except ConfigurationError as e:
            raise _rekey(e, path) from None


@dataclass(frozen=True)
class NetworkSpec:
    """
    Spiking population: external current per neuron, optional weights (rows receive)
    and the number of cycles to run.
    """

    i_o: tuple[float, ...]
    weights: tuple[tuple[float, ...], ...] | None = None
    cycles: int = 10

    def __post_init__(self) -> None:
        n = len(self.i_o)
        if self.weights is not None and (
            len(self.weights) != n or any(len(row) != n for row in self.weights)
        ):
            raise ConfigurationError(f"must be a {n} x {n} matrix", key="weights")
        if self.cycles < 1:
            raise ConfigurationError("need at least one cycle", key="cycles")

    @classmethod
    def from_dict(cls, data: Any, path: str) -> Self:
        section = _section(data, path)
        _reject_unknown(section, ("i_o", "groups", "weights", "cycles"), path)
        if "groups" in section and "i_o" in section:
            raise ConfigurationError("give either 'i_o' or 'groups'", key=path)
        if "groups" in section:
            i_o: list[float] = []
            for index, group in enumerate(section["groups"] or []):
                group_path = f"{_child(path, 'groups')}[{index}]"
                group = _section(group, group_path)
                count = _integer(group.get("count"), _child(group_path, "count"))
                current = _number(group.get("i_o"), _child(group_path, "i_o"))
                i_o.extend([current] * count)
            currents = tuple(i_o)
        else:
            currents = _numbers(section.get("i_o", []), _child(path, "i_o"))
        weights = section.get("weights")
        try:
            return cls(
                i_o=currents,
                weights=(
                    None
                    if weights is None
                    else _matrix(weights, _child(path, "weights"))
                ),
                cycles=_integer(section.get("cycles", 10), _child(path, "cycles")),
            )
        except ConfigurationError as e:
            raise _rekey(e, path) from None


@dataclass(frozen=True)
class XorSpec:
    input_weights: tuple[tuple[float, ...], ...]
    weights: tuple[tuple[float, ...], ...]
    input_duration: float = 30.0

    def __post_init__(self) -> None:
        if len(self.input_weights) != 3 or any(len(r) != 2 for r in self.input_weights):
            raise ConfigurationError("must be a 3 x 2 matrix", key="input_weights")
        if len(self.weights) != 3 or any(len(r) != 3 for r in self.weights):
            raise ConfigurationError("must be a 3 x 3 matrix", key="weights")

    @classmethod
    def from_dict(cls, data: Any, path: str) -> Self:
        section = _section(data, path)
        _reject_unknown(section, ("input_weights", "weights", "input_duration"), path)
        for required in ("input_weights", "weights"):
            if required not in section:
                raise ConfigurationError("missing", key=_child(path, required))
        try:
            return cls(
                input_weights=_matrix(
                    section["input_weights"], _child(path, "input_weights")
                ),
                weights=_matrix(section["weights"], _child(path, "weights")),
                input_duration=_number(
                    section.get("input_duration", 30.0),
                    _child(path, "input_duration"),
                ),
            )
        except ConfigurationError as e:
            raise _rekey(e, path) from None


@dataclass(frozen=True)
class BoltzmannSpec:
    n: int = 128
    n_patterns: int = 4
    sparsity: float = 0.75
    min_overlap: float = 0.3
    cycles: int = 2000
    temperature: float = 0.31
    weight_scale: float | None = None
    field_coding: str = "centered"
    threshold: float = 0.6
    hold: int = 2
    dwell_threshold: float = 0.8
    initial_pattern: int = 0

    def __post_init__(self) -> None:
        if self.field_coding not in ("centered", "spin", "binary"):
            raise ConfigurationError(
                "expected 'centered', 'spin' or 'binary', "
                f"got {self.field_coding!r}",
                key="field_coding",
            )
        if self.n < 2:
            raise ConfigurationError("need at least two units", key="n")
        if self.cycles < 1:
            raise ConfigurationError("need at least one cycle", key="cycles")
        if not self.temperature > 0:
            raise ConfigurationError("must be positive", key="temperature")
        if self.weight_scale is not None and not self.weight_scale > 0:
            raise ConfigurationError("must be positive", key="weight_scale")


@dataclass(frozen=True)
class ValidationSpec:
    """Sizes and tolerances of the cross-module checks run by ``validate``."""

    random_networks: int = 100
    max_neurons: int = 8
    cycles: int = 5
    weight_range: float = 2.0
    mfpt_paths: int = 10000
    mfpt_sigma: float = 0.5
    mfpt_offsets: tuple[float, ...] = (0.75, 1.0, 1.25, 1.5, 1.75)
    mfpt_tolerance: float = 0.1
    regimes: tuple[str, ...] = ("low", "mid", "high")
    temperature_tolerance: float = 0.35
    grid_points: int = 25

    def __post_init__(self) -> None:
        for name in self.regimes:
            if name not in REGIMES or name == "silent":
                raise ConfigurationError(
                    f"unknown noisy regime {name!r}", key="regimes"
                )
        if self.random_networks < 1 or self.max_neurons < 1:
            raise ConfigurationError("need at least one network", key="random_networks")
        if self.grid_points < 4:
            raise ConfigurationError("need at least 4 points", key="grid_points")


def _reject_unknown(
    section: Mapping[str, Any], known: Sequence[str], path: str
) -> None:
    for key in section:
        if key not in known:
            raise ConfigurationError(
                f"unknown key (expected one of {', '.join(known)})",
                key=_child(path, key),
            )


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


_TOP_LEVEL_KEYS = (
    "experiment",
    "seed",
    "trials",
    "output",
    "neuron",
    "noise",
    "switch",
    "rhythm",
    "simulation",
    "transfer",
    "network",
    "xor",
    "boltzmann",
    "validation",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one command needs; ``from_dict(to_dict(c)) == c`` holds for every
    configuration.
    """

    experiment: str
    seed: int = 0
    trials: int = 2000
    output: str = "results"
    neuron: NeuronParams = NeuronParams()
    noise: NoiseConfig = NoiseConfig()
    switch: NoiseSwitch | None = None
    rhythm: RhythmConfig = RhythmConfig()
    simulation: SimulationConfig = SimulationConfig()
    transfer: TransferSpec | None = None
    network: NetworkSpec | None = None
    xor: XorSpec | None = None
    boltzmann: BoltzmannSpec = BoltzmannSpec()
    validation: ValidationSpec = ValidationSpec()

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r} "
                f"(expected one of {', '.join(EXPERIMENTS)})",
                key="experiment",
            )
        if self.seed < 0:
            raise ConfigurationError("must be non-negative", key="seed")
        if self.trials < 1:
            raise ConfigurationError("need at least one trial", key="trials")
        required = {"transfer": self.transfer, "raster": self.network, "xor": self.xor}
        if self.experiment in required and required[self.experiment] is None:
            section = {"transfer": "transfer", "raster": "network", "xor": "xor"}
            raise ConfigurationError(
                f"required by the {self.experiment} experiment",
                key=section[self.experiment],
            )

    @property
    def noise_schedule(self) -> NoiseSchedule:
        switches = () if self.switch is None else (self.switch,)
        return NoiseSchedule(self.noise, switches)

    @classmethod
    def from_dict(cls, data: Any) -> Self:
        data = _section(data, "")
        _reject_unknown(data, _TOP_LEVEL_KEYS, "")
        if "experiment" not in data:
            raise ConfigurationError("missing", key="experiment")

        switch = None
        if data.get("switch") is not None:
            section = _section(data["switch"], "switch")
            _reject_unknown(section, ("at_ms", "noise"), "switch")
            switch = NoiseSwitch(
                at_ms=_number(section.get("at_ms"), "switch.at_ms"),
                noise=_noise(section.get("noise"), "switch.noise"),
            )

        def optional(name: str, parse: Any) -> Any:
            return None if data.get(name) is None else parse(data[name], name)

        return cls(
            experiment=str(data["experiment"]),
            seed=_integer(data.get("seed", 0), "seed"),
            trials=_integer(data.get("trials", 2000), "trials"),
            output=str(data.get("output", "results")),
            neuron=_build(NeuronParams, data.get("neuron"), "neuron"),
            noise=_noise(data.get("noise") or {}, "noise"),
            switch=switch,
            rhythm=_build(RhythmConfig, data.get("rhythm"), "rhythm"),
            simulation=_build(SimulationConfig, data.get("simulation"), "simulation"),
            transfer=optional("transfer", TransferSpec.from_dict),
            network=optional("network", NetworkSpec.from_dict),
            xor=optional("xor", XorSpec.from_dict),
            boltzmann=_build(BoltzmannSpec, data.get("boltzmann"), "boltzmann"),
            validation=_build(ValidationSpec, data.get("validation"), "validation"),
        )

    @classmethod
    def from_file(cls, filename: Path) -> Self:
        return cls.from_dict(load_yaml_dict(filename))

    def to_dict(self) -> YAMLData:
        return {
            key: _plain(dataclasses.asdict(value))
            if dataclasses.is_dataclass(value)
            else _plain(value)
            for key, value in (
                (f.name, getattr(self, f.name)) for f in dataclasses.fields(self)
            )
            if value is not None
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_yaml().encode("UTF-8")).hexdigest()

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        trials: int | None = None,
        output: str | None = None,
    ) -> Self:
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if trials is not None:
            changes["trials"] = trials
        if output is not None:
            changes["output"] = output
        return replace(self, **changes)

    @property
    def xor_circuit(self) -> XorCircuit:
        if self.xor is None:
            return XorCircuit.default()
        return XorCircuit(
            np.array(self.xor.input_weights),
            WeightMatrix(np.array(self.xor.weights), np.zeros(3)),
            self.xor.input_duration,
        )

    @property
    def network_weights(self) -> WeightMatrix:
        if self.network is None:
            raise ConfigurationError("missing", key="network")
        n = len(self.network.i_o)
        weights = (
            np.zeros((n, n))
            if self.network.weights is None
            else np.array(self.network.weights, dtype=float).reshape(n, n)
        )
        return WeightMatrix(weights, np.array(self.network.i_o, dtype=float))
