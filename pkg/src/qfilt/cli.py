"""Command-line entry points.

qfilt run --config path      scaling experiment from a TOML/JSON config
qfilt validate               branching + readout-model + oracle self-checks
qfilt demo --case ...        small both-strategy run for quick inspection
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    SeededRng,
    grid_bayes_oracle,
    multinomial_resample,
    validate_branching,
)
from .harness import ExperimentConfig, run_demo, run_scaling_experiment
from .measurement import compute_rho0, rho0_reference_quadrature
from .nmqa import NmqaConfig

_EXPERIMENT_KEYS = {
    "case",
    "d",
    "spacing",
    "seed",
    "repetitions",
    "t_max",
    "n_alpha_grid",
    "output_dir",
    "truth_noise",
    "n_jobs",
    "nmqa",
}
_NMQA_KEYS = {f.name for f in fields(NmqaConfig)}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML or JSON experiment config; unknown keys are rejected."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        doc = json.loads(text.decode("utf-8"))
    elif path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(text.decode("utf-8"))
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table/object")
    unknown = set(doc) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    nmqa_doc = doc.get("nmqa")
    if not isinstance(nmqa_doc, dict):
        raise ConfigError("config needs an [nmqa] table")
    unknown = set(nmqa_doc) - _NMQA_KEYS
    if unknown:
        raise ConfigError(f"unknown nmqa keys: {sorted(unknown)}")
    if "r_bounds" in nmqa_doc and nmqa_doc["r_bounds"] is not None:
        nmqa_doc["r_bounds"] = tuple(nmqa_doc["r_bounds"])
    kwargs = {k: v for k, v in doc.items() if k != "nmqa"}
    kwargs["n_alpha_grid"] = tuple(kwargs.get("n_alpha_grid", ()))
    return ExperimentConfig(nmqa=NmqaConfig(n_alpha=3, **nmqa_doc) if "n_alpha" not in nmqa_doc else NmqaConfig(**nmqa_doc), **kwargs)


def _check(name: str, passed: bool, detail: str) -> bool:
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return passed


def _validate() -> int:
    ok = True
    rng = SeededRng(20_260_809).generator()

    # readout-model contrast: closed form vs quadrature over random models
    worst = 0.0
    for _ in range(50):
        b = rng.uniform(0.1, 2.0)
        sv = 10 ** rng.uniform(-9, 0)
        worst = max(worst, abs(compute_rho0(b, sv) - rho0_reference_quadrature(b, sv)))
    ok &= _check("rho0 closed form vs quadrature", worst <= 1e-8, f"max |diff| = {worst:.3e}")

    # branching conformance on a skewed weight vector
    stats = validate_branching(np.array([0.7, 0.2, 0.1]), 10, 100_000, rng)
    ok &= _check(
        "multinomial branching conformance",
        stats.passed,
        f"mean dev {stats.max_mean_deviation_sigmas:.2f} sigma, "
        f"qAq/bound {stats.max_quadratic_form_ratio:.3f}",
    )

    # negative control: a resampler that always copies index 0 must fail
    def broken(w, n, r):
        from .core import ResampleOutcome

        counts = np.zeros(len(w), dtype=int)
        counts[0] = n
        return ResampleOutcome(counts, np.zeros(n, dtype=int))

    broken_stats = validate_branching(np.array([0.5, 0.5]), 4, 10_000, rng, resampler=broken)
    ok &= _check(
        "broken-resampler negative control",
        not broken_stats.passed,
        "verdict correctly fails",
    )

    # exact grid recursion against a one-shot product computation
    cells = np.linspace(0.0, np.pi, 101)
    prior = np.full(101, 1.0 / 101)
    obs = (rng.random(200) < 0.75).astype(int)

    def lik(y):
        p1 = 0.5 + 0.5 * np.cos(cells)
        return p1 if y == 1 else 1.0 - p1

    post = grid_bayes_oracle(prior, lik, obs)
    brute = prior.copy()
    for y in obs:
        brute = brute * lik(int(y))
    brute /= brute.sum()
    drift = float(np.abs(post - brute).max())
    ok &= _check("grid oracle vs product oracle", drift <= 1e-10, f"max |diff| = {drift:.2e}")

    # resampler conservation on random weights
    conserved = all(
        int(multinomial_resample(rng.random(8), 32, rng).offspring_counts.sum()) == 32
        for _ in range(1000)
    )
    ok &= _check("particle-number conservation", conserved, "1000 random draws")

    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qfilt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scaling experiment from a config file")
    p_run.add_argument("--config", required=True, help="TOML or JSON experiment config")

    sub.add_parser("validate", help="run the branching/readout/oracle self-checks")

    p_demo = sub.add_parser("demo", help="small both-strategy demo run")
    p_demo.add_argument(
        "--case",
        default="1d-linear",
        choices=["1d-linear", "2d-square", "2d-gaussian"],
    )
    p_demo.add_argument("--out", default="demo_out", help="output directory")
    p_demo.add_argument("--seed", type=int, default=2024)
    p_demo.add_argument("--d", type=int, default=None, help="number of qubits")
    p_demo.add_argument("--repetitions", type=int, default=4)
    p_demo.add_argument("--t-max", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            result = run_scaling_experiment(config)
            out = Path(config.output_dir) if config.output_dir else None
            print(f"case={result.case} strategy={result.strategy} t_max={result.t_max}")
            print(f"final-iteration epsilon = {result.epsilon[-1]:+.4f}")
            if out:
                print(f"wrote {out / 'results.csv'} and {out / 'manifest.json'}")
            return 0
        if args.command == "validate":
            return _validate()
        if args.command == "demo":
            csv_path = run_demo(
                args.case,
                args.out,
                seed=args.seed,
                d=args.d,
                repetitions=args.repetitions,
                t_max=args.t_max,
            )
            print(f"wrote {csv_path}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
