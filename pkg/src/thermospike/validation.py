"""
Cross-module checks that tie the spiking simulator to its analytic and two-state
counterparts.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field
from typing import Any

import numpy as np

from .config import ExperimentConfig
from .network import CycleState
from .network import RhythmConfig
from .network import TwoStateNetwork
from .network import WeightMatrix
from .network import rhythm_phase
from .network import run_network
from .network import run_two_state
from .network import run_xor
from .network import schedule_pulse
from .network import xor_oracle_network
from .noise import REGIMES
from .noise import SILENT
from .noise import RngStreamKey
from .noise import Source
from .thermometry import OUMoments
from .thermometry import effective_window
from .thermometry import first_passage_times
from .thermometry import fit_logistic
from .thermometry import measure_transfer
from .thermometry import mfpt
from .thermometry import p_spike_analytic
from .thermometry import temperature_analytic

XOR_TRUTH_TABLE = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)
    tolerance: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "tolerance": self.tolerance,
        }


def check_zero_noise_step(config: ExperimentConfig) -> CheckResult:
    """Silent transfer curve on a 0.6..2.0 grid is 0 up to 0.99 and 1 from 1.01."""
    grid = np.round(np.arange(0.6, 2.0 + 1e-9, 0.01), 10)
    curve = measure_transfer(
        config.neuron,
        SILENT,
        grid,
        1,
        config.rhythm.T_W,
        RngStreamKey(config.seed),
        config.simulation.dt,
    )
    below = [p.p_spike for p in curve.points if p.i_o <= 0.99]
    above = [p.p_spike for p in curve.points if p.i_o >= 1.01]
    passed = all(p == 0 for p in below) and all(p == 1 for p in above)
    return CheckResult(
        "zero_noise_step",
        passed,
        {
            "spiking_below_0.99": int(sum(below)),
            "silent_above_1.01": len(above) - int(sum(above)),
        },
        "exact",
    )


def check_oracle_equivalence(config: ExperimentConfig) -> CheckResult:
    """
    Zero-noise spiking networks against the two-state rule, on random instances.
    """
    spec = config.validation
    rng = RngStreamKey(config.seed, source=Source.Other, trial=1).generator()
    matches = 0
    for index in range(spec.random_networks):
        n = int(rng.integers(1, spec.max_neurons + 1))
        weights = WeightMatrix(
            rng.uniform(-spec.weight_range, spec.weight_range, size=(n, n)),
            rng.uniform(-0.5, 1.5, size=n),
        )
        initial = rng.integers(0, 2, size=n).astype(np.int8)
        run = run_network(
            weights,
            config.rhythm,
            SILENT,
            config.neuron,
            spec.cycles,
            RngStreamKey(config.seed, neuron=index),
            CycleState(0, initial),
            dt=config.simulation.dt,
        )
        oracle = TwoStateNetwork.equivalent_of(
            weights, config.neuron, config.rhythm.T_W, initial, dt=config.simulation.dt
        )
        expected = run_two_state(oracle, spec.cycles, RngStreamKey(config.seed))
        if all(np.array_equal(a.s, b) for a, b in zip(run.states, expected)):
            matches += 1
    return CheckResult(
        "oracle_equivalence",
        matches == spec.random_networks,
        {"matches": matches, "networks": spec.random_networks},
        "all networks match",
    )


def check_pulse_coverage(config: ExperimentConfig) -> CheckResult:
    """Every pulse covers the whole next window and intersects no other window."""
    cfg: RhythmConfig = config.rhythm
    rng = RngStreamKey(config.seed, source=Source.Other, trial=2).generator()
    weights = WeightMatrix(np.ones((1, 1)), np.zeros(1))
    failures = 0
    samples = 200
    for _ in range(samples):
        k = int(rng.integers(1, 50))
        t_f = float(rng.uniform(cfg.window_start(k), cfg.window_end(k)))
        if rhythm_phase(t_f, cfg).inhibited:
            continue
        (pulse,) = schedule_pulse((0, t_f), weights, cfg.T_W)
        covers_next = (
            pulse.onset <= cfg.window_start(k + 1)
            and pulse.offset >= cfg.window_end(k + 1)
        )
        misses_others = (
            pulse.onset >= cfg.window_end(k) and pulse.offset <= cfg.window_start(k + 2)
        )
        if not (covers_next and misses_others):
            failures += 1
    return CheckResult(
        "pulse_coverage",
        failures == 0,
        {"samples": samples, "failures": failures},
        "exact",
    )


def check_xor(config: ExperimentConfig) -> CheckResult:
    circuit = config.xor_circuit
    outputs = {}
    agree = True
    for inputs, expected in XOR_TRUTH_TABLE.items():
        output = run_xor(
            inputs,
            circuit,
            params=config.neuron,
            cfg=config.rhythm,
            dt=config.simulation.dt,
        )
        oracle = xor_oracle_network(
            inputs, circuit, config.neuron, config.rhythm.T_W, config.simulation.dt
        )
        trajectory = run_two_state(oracle, 2, RngStreamKey(config.seed))
        agree &= int(trajectory[1][4]) == output == expected
        outputs[f"{inputs[0]}{inputs[1]}"] = output
    return CheckResult("xor_truth_table", agree, outputs, "4/4 correct")


def check_mfpt(config: ExperimentConfig) -> CheckResult:
    """Analytic MFPT against Monte-Carlo first passages of the same diffusion."""
    spec = config.validation
    params = config.neuron
    t_w_prime = effective_window(
        config.rhythm.T_W, params.tau_m, config.simulation.gamma
    )
    measured = {}
    passed = True
    for index, offset in enumerate(spec.mfpt_offsets):
        mom = OUMoments(params.u_thresh - offset * spec.mfpt_sigma, spec.mfpt_sigma)
        analytic = mfpt(params, mom)
        times = first_passage_times(
            params,
            mom,
            spec.mfpt_paths,
            RngStreamKey(config.seed, neuron=index, source=Source.Other, trial=3),
        )
        sampled = float(np.mean(times))
        error = abs(sampled - analytic) / analytic
        passed &= math.isfinite(sampled) and error <= spec.mfpt_tolerance
        measured[f"y={offset:g}"] = {
            "analytic_ms": analytic,
            "monte_carlo_ms": sampled,
            "relative_error": error,
            "p_spike": p_spike_analytic(analytic, t_w_prime),
        }
    return CheckResult(
        "mfpt_monte_carlo", passed, measured, f"<= {spec.mfpt_tolerance}"
    )


def check_temperatures(config: ExperimentConfig) -> CheckResult:
    """Analytic against fitted temperature for each configured noise regime."""
    spec = config.validation
    params = config.neuron
    window = config.rhythm.T_W
    measured = {}
    passed = True
    for index, name in enumerate(spec.regimes):
        noise = REGIMES[name]
        estimate = temperature_analytic(params, noise, config.simulation.gamma, window)
        half_width = 6.0 * estimate.t_analytic / params.R
        grid = np.linspace(
            estimate.analytic_midpoint - half_width,
            estimate.analytic_midpoint + half_width,
            spec.grid_points,
        )
        curve = measure_transfer(
            params,
            noise,
            grid,
            config.trials,
            window,
            RngStreamKey(config.seed, neuron=1000 * (index + 1)),
            config.simulation.dt,
        )
        fit = fit_logistic(curve)
        disagreement = abs(estimate.t_analytic - fit.temperature) / fit.temperature
        passed &= disagreement <= spec.temperature_tolerance
        measured[name] = {
            "t_analytic": estimate.t_analytic,
            "t_fitted": fit.temperature,
            "relative_disagreement": disagreement,
        }
    return CheckResult(
        "analytic_vs_fitted_temperature",
        passed,
        measured,
        f"<= {spec.temperature_tolerance}",
    )


CHECKS: tuple[Callable[[ExperimentConfig], CheckResult], ...] = (
    check_zero_noise_step,
    check_pulse_coverage,
    check_oracle_equivalence,
    check_xor,
    check_mfpt,
    check_temperatures,
)


def run_suite(
    config: ExperimentConfig,
    *,
    report: Callable[[CheckResult], None] | None = None,
    checks: tuple[Callable[[ExperimentConfig], CheckResult], ...] = CHECKS,
) -> list[CheckResult]:
    """
    Run every check in order.

    :raises ConfigurationError: up front, when the window is shorter than the excluded
        transient.
    """
    effective_window(config.rhythm.T_W, config.neuron.tau_m, config.simulation.gamma)
    results = []
    for check in checks:
        result = check(config)
        if report is not None:
            report(result)
        results.append(result)
    return results
