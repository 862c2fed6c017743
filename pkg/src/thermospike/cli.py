from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from collections.abc import Callable
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from datetime import datetime
from datetime import timezone
from pathlib import Path
from typing import Any
from typing import NamedTuple
from typing import cast

import numpy as np
from colorama import Fore

from .boltzmann import FieldCoding
from .boltzmann import calibrate_regime
from .boltzmann import generate_patterns
from .boltzmann import run_boltzmann
from .config import ExperimentConfig
from .config import resolve_config_path
from .errors import FitError
from .errors import ThermometryError
from .errors import UsageError
from .network import simulate_xor
from .neuron import membrane_trace
from .noise import RngStreamKey
from .noise import Source
from .noise import noise_impulses
from .render import PATTERN_TABLE
from .render import POPULATION_TABLE
from .render import RASTER_TABLE
from .render import STATE_TABLE
from .render import TRACE_TABLE
from .render import TRANSFER_TABLE
from .render import TRANSITION_TABLE
from .render import TRUTH_TABLE
from .render import RunManifest
from .render import SampledTrace
from .render import correlation_table
from .render import render_yaml
from .render import write_outputs
from .thermometry import TransferPoint
from .thermometry import fit_logistic
from .thermometry import measure_transfer
from .thermometry import temperature_analytic
from .validation import XOR_TRUTH_TABLE
from .validation import CheckResult
from .validation import run_suite

DEFAULT_PRESETS = {
    "transfer": "fig2",
    "raster": "fig3",
    "xor": "fig4",
    "boltzmann": "fig5",
    "validate": "validate",
}


@dataclass(frozen=True)
class Reporter:
    """Progress messages on stdout; silent with ``--quiet``."""

    quiet: bool = False
    verbosity: int = 0

    def stage(self, message: str) -> None:
        if not self.quiet:
            print(f"{Fore.BLUE}{message}{Fore.RESET}", flush=True)

    def detail(self, message: str, level: int = 1) -> None:
        if not self.quiet and self.verbosity >= level:
            print(f"{Fore.CYAN}{message}{Fore.RESET}", flush=True)

    def outcome(self, message: str, ok: bool) -> None:
        if not self.quiet:
            color = Fore.GREEN if ok else Fore.RED
            print(f"{color}{message}{Fore.RESET}", flush=True)


class CommandResult(NamedTuple):
    files: dict[str, str]
    exit_code: int = 0


def _table(renderer: Any, data: Any, config: ExperimentConfig) -> str:
    from thermospike import __version__

    return renderer.render(data, version=__version__, experiment=config.experiment)


def cmd_transfer(config: ExperimentConfig, reporter: Reporter) -> CommandResult:
    """
    Transfer curve, logistic fit, analytic temperature (with noise) and sample traces.
    """
    assert config.transfer is not None
    params = config.neuron
    window = config.rhythm.T_W
    dt = config.simulation.dt
    currents = config.transfer.currents

    def progress(point: TransferPoint) -> None:
        reporter.detail(f"I_o={point.i_o:.4g}  p_spike={point.p_spike:.4g}")

    reporter.stage(
        f"Measuring {len(currents)} currents x {config.trials} trials "
        f"(lambda_e={config.noise.lambda_e:g} Hz, lambda_i={config.noise.lambda_i:g} Hz)"
    )
    curve = measure_transfer(
        params,
        config.noise,
        currents,
        config.trials,
        window,
        RngStreamKey(config.seed),
        dt,
        progress=progress,
    )

    summary: dict[str, Any] = {
        "noise": dataclasses.asdict(config.noise),
        "trials": config.trials,
        "points": len(curve.points),
    }
    try:
        fit = fit_logistic(curve)
    except FitError as e:
        reporter.outcome(f"No logistic fit: {e}", ok=True)
        summary["fit"] = None
        summary["fit_error"] = str(e)
    else:
        reporter.outcome(
            f"Fitted T={fit.temperature:.4g} midpoint={fit.midpoint:.4g}", ok=True
        )
        summary["fit"] = {
            "midpoint": fit.midpoint,
            "temperature": fit.temperature,
            "residual": fit.residual,
        }

    if not config.noise.is_silent:
        try:
            estimate = temperature_analytic(
                params, config.noise, config.simulation.gamma, window
            )
        except ThermometryError as e:
            summary["analytic_error"] = str(e)
        else:
            summary["analytic"] = {
                "temperature": estimate.t_analytic,
                "midpoint": estimate.analytic_midpoint,
                "slope": estimate.slope,
                "t_mu": estimate.t_mu,
                "t_w_prime": estimate.t_w_prime,
                "gamma": estimate.gamma,
            }
            if summary["fit"] is not None:
                t_fitted = summary["fit"]["temperature"]
                summary["analytic"]["relative_disagreement"] = (
                    abs(estimate.t_analytic - t_fitted) / t_fitted
                )
            reporter.outcome(f"Analytic T={estimate.t_analytic:.4g}", ok=True)

    files = {
        "transfer.tsv": _table(TRANSFER_TABLE, curve, config),
        "summary.yml": render_yaml(summary),
    }
    traces = []
    for index, current in enumerate(config.transfer.trace_currents):
        key = RngStreamKey(config.seed, neuron=len(currents) + index)
        impulses = noise_impulses(config.noise, window, key).as_list()
        times, potential = membrane_trace(params, current, impulses, window, dt)
        traces.append(
            SampledTrace(
                f"{current:g}", 0, times, potential, np.full(len(times), current)
            )
        )
    if traces:
        files["traces.tsv"] = _table(TRACE_TABLE, traces, config)
    return CommandResult(files)


def _fraction(bits: np.ndarray) -> float:
    return float(bits.mean()) if bits.size else 0.0


def cmd_raster(config: ExperimentConfig, reporter: Reporter) -> CommandResult:
    """Spike raster of a clocked population, optionally switching regime mid-run."""
    from .network import run_network

    assert config.network is not None
    weights = config.network_weights
    schedule = config.noise_schedule
    reporter.stage(
        f"Running {weights.n} neurons for {config.network.cycles} cycles "
        f"at {config.rhythm.frequency_hz:.3g} Hz"
    )
    run = run_network(
        weights,
        config.rhythm,
        schedule,
        config.neuron,
        config.network.cycles,
        RngStreamKey(config.seed),
        dt=config.simulation.dt,
    )
    half = weights.n // 2
    rows = []
    by_regime: dict[int, list[tuple[float, float]]] = {}
    for state in run.states:
        start = config.rhythm.window_start(state.k)
        regime = schedule.regime_index(start)
        top, bottom = _fraction(state.s[:half]), _fraction(state.s[half:])
        rows.append((state.k, start, top, bottom, regime))
        by_regime.setdefault(regime, []).append((top, bottom))
        reporter.detail(f"cycle {state.k}: {state.bits}", level=2)

    summary = {
        "neurons": weights.n,
        "cycles": config.network.cycles,
        "spikes": len(run.raster),
        "regimes": {
            index: {
                "cycles": len(values),
                "fraction_top": float(np.mean([v[0] for v in values])),
                "fraction_bottom": float(np.mean([v[1] for v in values])),
            }
            for index, values in by_regime.items()
        },
    }
    reporter.outcome(f"{len(run.raster)} spikes", ok=True)
    return CommandResult(
        {
            "raster.tsv": _table(RASTER_TABLE, run.raster, config),
            "states.tsv": _table(STATE_TABLE, run.states, config),
            "population.tsv": _table(POPULATION_TABLE, rows, config),
            "summary.yml": render_yaml(summary),
        }
    )


def cmd_xor(config: ExperimentConfig, reporter: Reporter) -> CommandResult:
    """
    Truth table of the XOR circuit; with background noise every pair is repeated
    ``trials`` times and the success probability reported.
    """
    circuit = config.xor_circuit
    trials = 1 if config.noise.is_silent else config.trials
    rows = []
    traces = []
    for pair_index, (inputs, expected) in enumerate(XOR_TRUTH_TABLE.items()):
        correct = 0
        ones = 0
        for trial in range(trials):
            run = simulate_xor(
                inputs,
                circuit,
                params=config.neuron,
                cfg=config.rhythm,
                noise=config.noise,
                key=RngStreamKey(config.seed, neuron=3 * (pair_index * trials + trial)),
                dt=config.simulation.dt,
                record_trace=trial == 0,
            )
            output = int(run.states[1].s[2])
            ones += output
            correct += output == expected
            if trial == 0:
                label = f"{inputs[0]}{inputs[1]}"
                for neuron in range(3):
                    traces.append(
                        SampledTrace(
                            label,
                            neuron,
                            np.concatenate([w.times for w in run.traces]),
                            np.concatenate([w.potential[:, neuron] for w in run.traces]),
                            np.concatenate([w.current[:, neuron] for w in run.traces]),
                        )
                    )
        majority = int(2 * ones > trials)
        rows.append((*inputs, expected, majority, correct / trials, trials))
        reporter.detail(
            f"{inputs[0]} XOR {inputs[1]} -> {majority} "
            f"(p_correct={correct / trials:.3g})"
        )

    all_correct = all(row[4] == 1.0 for row in rows)
    reporter.outcome(
        "XOR truth table reproduced" if all_correct else "XOR table is stochastic",
        ok=all_correct or trials > 1,
    )
    summary = {
        "trials": trials,
        "all_correct": all_correct,
        "p_correct": {f"{r[0]}{r[1]}": r[4] for r in rows},
    }
    return CommandResult(
        {
            "truth_table.tsv": _table(TRUTH_TABLE, rows, config),
            "traces.tsv": _table(TRACE_TABLE, traces, config),
            "summary.yml": render_yaml(summary),
        }
    )


def cmd_boltzmann(config: ExperimentConfig, reporter: Reporter) -> CommandResult:
    """Stored patterns, the spiking Boltzmann machine run and its transitions."""
    spec = config.boltzmann
    field_coding = cast(FieldCoding, spec.field_coding)
    reporter.stage(
        f"Generating {spec.n_patterns} patterns of {spec.n} units "
        f"(sparsity {spec.sparsity:g}, overlap >= {spec.min_overlap:g})"
    )
    patterns = generate_patterns(
        spec.n,
        spec.n_patterns,
        spec.sparsity,
        spec.min_overlap,
        RngStreamKey(config.seed, source=Source.Other),
        require_stable=True,
        field_coding=field_coding,
    )
    reporter.stage("Calibrating the noise regime")
    try:
        calibration = calibrate_regime(
            config.neuron,
            config.noise,
            config.rhythm.T_W,
            config.trials,
            RngStreamKey(config.seed, neuron=spec.n),
            gamma=config.simulation.gamma,
            dt=config.simulation.dt,
        )
    except ThermometryError as e:
        # FitError is a ThermometryError.
        reporter.outcome(f"No calibration: {e}", ok=False)
        failure = {
            "calibration": None,
            "calibration_error": str(e),
            "cycles": spec.cycles,
        }
        return CommandResult(
            {
                "patterns.tsv": _table(PATTERN_TABLE, patterns, config),
                "summary.yml": render_yaml(failure),
            },
            exit_code=1,
        )
    reporter.detail(
        f"midpoint c={calibration.midpoint:.4g}, fitted T={calibration.temperature}"
    )
    reporter.stage(f"Running {spec.cycles} cycles")
    result = run_boltzmann(
        patterns,
        config.noise,
        config.rhythm,
        config.neuron,
        spec.cycles,
        RngStreamKey(config.seed),
        calibration=calibration,
        temperature=spec.temperature,
        weight_scale=spec.weight_scale,
        field_coding=field_coding,
        initial_pattern=spec.initial_pattern,
        threshold=spec.threshold,
        hold=spec.hold,
        dt=config.simulation.dt,
    )
    dwell = result.trace.dwell_fraction(spec.dwell_threshold)
    reporter.outcome(
        f"{len(result.transitions)} transitions, dwell fraction {dwell:.3g}", ok=True
    )
    summary = {
        "calibration": dataclasses.asdict(calibration),
        "cycles": spec.cycles,
        "dwell_fraction": dwell,
        "dwell_threshold": spec.dwell_threshold,
        "transitions": len(result.transitions),
        "patterns_visited": sorted({int(t.to_pattern) for t in result.transitions}),
    }
    return CommandResult(
        {
            "patterns.tsv": _table(PATTERN_TABLE, patterns, config),
            "correlation.tsv": _table(
                correlation_table(len(patterns)),
                (result.trace, result.transitions),
                config,
            ),
            "transitions.tsv": _table(TRANSITION_TABLE, result.transitions, config),
            "raster.tsv": _table(RASTER_TABLE, result.network.raster, config),
            "summary.yml": render_yaml(summary),
        }
    )


def cmd_validate(config: ExperimentConfig, reporter: Reporter) -> CommandResult:
    """Cross-module checks; any failure makes the exit code 1."""

    def report(result: CheckResult) -> None:
        reporter.outcome(
            f"{'PASS' if result.passed else 'FAIL'} {result.name}", ok=result.passed
        )
        for name, value in result.measured.items():
            reporter.detail(f"    {name}: {value}")

    results = run_suite(config, report=report)
    passed = all(r.passed for r in results)
    document = {"passed": passed, "checks": [r.as_dict() for r in results]}
    return CommandResult(
        {"validation.yml": render_yaml(document)}, exit_code=0 if passed else 1
    )


COMMANDS: Mapping[str, Callable[[ExperimentConfig, Reporter], CommandResult]] = {
    "transfer": cmd_transfer,
    "raster": cmd_raster,
    "xor": cmd_xor,
    "boltzmann": cmd_boltzmann,
    "validate": cmd_validate,
}


def parse_env_var_args(env_var_args: Sequence[str] | None) -> Mapping[str, str]:
    """
    :param env_var_args:
        List of arguments in the form "VAR_NAME" or "VAR_NAME=VALUE"
    :return:
        Mapping from "VAR_NAME" to "VALUE" or empty str.
    """
    env_vars = {}
    if env_var_args is not None:
        for arg in env_var_args:
            split_arg = arg.split("=", 1)
            if len(split_arg) == 1:
                env_vars[split_arg[0]] = ""
            elif len(split_arg) == 2:
                env_vars[split_arg[0]] = split_arg[1]

    return env_vars


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="thermospike",
        description="Clocked spiking networks where Poisson background noise sets "
        "the temperature of the equivalent two-state network.",
    )
    parser.add_argument(
        "command",
        nargs="?",
        choices=list(COMMANDS),
        help="The experiment to run.",
    )
    parser.add_argument(
        "--config",
        "-c",
        help="Configuration file or bundled preset name (fig1..fig5, validate). "
        "Defaults to the preset of the command.",
    )
    parser.add_argument("--out", "-o", help="Output directory.")
    parser.add_argument("--seed", type=int, help="Override the configured seed.")
    parser.add_argument(
        "--trials", type=int, help="Override the configured number of trials."
    )
    parser.add_argument(
        "--quiet", action="store_true", default=False, help="Do not show progress"
    )
    parser.add_argument(
        "--env-var",
        "-e",
        action="append",
        help="Define or override environment variables in the form VAR_NAME or "
        "VAR_NAME=VALUE.",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Use once for per-step values, twice for per-cycle states.",
    )
    parser.add_argument(
        "--version", action="store_true", default=False, help="Show version and exit"
    )

    argv = sys.argv[1:] if argv is None else argv
    return parser.parse_args(argv)


def main(args: list[str] | None = None) -> int:
    args_namespace = parse_args(args)
    try:
        return main_with_args_namespace(args_namespace)
    except UsageError as e:
        print(f"{Fore.RED}ERROR: {e}{Fore.RESET}", file=sys.stderr)
        return 2


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    path = resolve_config_path(args.config or DEFAULT_PRESETS[args.command])
    config = ExperimentConfig.from_file(path).with_overrides(
        seed=args.seed, trials=args.trials, output=args.out
    )
    if config.experiment != args.command:
        raise UsageError(
            f'"{path}" configures the {config.experiment} experiment, '
            f"not {args.command}."
        )
    return config


def main_with_args_namespace(args: argparse.Namespace) -> int:
    if args.version:
        from thermospike import __version__

        print(f"thermospike version {__version__}")
        return 0

    if args.command is None:
        raise UsageError(f"a command is required ({', '.join(COMMANDS)}).")

    os.environ.update(parse_env_var_args(args.env_var))
    config = load_config(args)
    reporter = Reporter(quiet=args.quiet, verbosity=args.verbose)
    return run_command(config, reporter)


def run_command(config: ExperimentConfig, reporter: Reporter) -> int:
    """Run the configured experiment and write its files plus the run manifest."""
    from thermospike import __version__

    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    start = time.perf_counter()
    result = COMMANDS[config.experiment](config, reporter)
    out_dir = Path(config.output)
    outputs = write_outputs(out_dir, result.files)
    manifest = RunManifest(
        config_hash=config.config_hash,
        version=__version__,
        seed=config.seed,
        experiment=config.experiment,
        duration_s=time.perf_counter() - start,
        started_at=started_at,
        outputs=outputs,
    )
    write_outputs(out_dir, {"manifest.yml": manifest.render()})
    reporter.stage(f"Wrote {len(outputs)} files to {out_dir}")
    return result.exit_code
