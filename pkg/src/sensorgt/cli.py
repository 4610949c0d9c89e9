"""Command line front end.

Subcommands cover the full workflow: generate a model, simulate traces,
inject faults, calibrate a detection threshold, then run experiments,
parameter sweeps, or paired method comparisons from a key=value config.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import baselines, faults, harness, kalman, lds
from .config import (
    METHODS,
    SWEEP_AXES,
    ExperimentConfig,
    config_from_text,
    config_to_text,
    parse_overrides,
)
from .errors import ConfigurationError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key=value experiment config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--seed", type=int, help="override experiment.seed")
    parser.add_argument("--trials", type=int, help="override experiment.trials")
    parser.add_argument("--method", choices=METHODS, help="override experiment.method")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--out", help="write results CSV here (default: stdout only)")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = ""
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.method is not None:
        overrides["method"] = args.method
    return config_from_text(text, **overrides)


def _emit(rows, out_path) -> None:
    text = harness.rows_to_csv(rows)
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _cmd_gen_model(args) -> int:
    model = lds.generate_random_stable_model(
        state_dim=args.state_dim,
        num_sensors=args.num_sensors,
        spectral_radius=args.spectral_radius,
        noise_scales=(args.process_noise, 0.0),
        seed=args.seed,
        num_inputs=args.num_inputs,
    )
    model = lds.normalize_output_variance(model, args.signal_variance)
    meas = args.meas_noise_fraction * args.signal_variance
    model = lds.StateSpaceModel(
        A=model.A,
        C=model.C,
        process_noise_cov=model.process_noise_cov,
        meas_noise_cov=meas * np.eye(args.num_sensors),
        B=model.B,
    )
    lds.save_model(model, args.out)
    print(f"wrote model ({model.state_dim} states, {model.num_sensors} sensors) to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    model = lds.load_model(args.model)
    _, trace = lds.simulate(
        model,
        args.steps,
        input_mode=args.input_mode,
        input_variance=args.input_variance,
        seed=args.seed,
        sample_period=args.sample_period,
    )
    lds.save_trace(trace, args.out)
    print(f"wrote trace ({trace.num_steps} steps, {trace.num_sensors} sensors) to {args.out}")
    return 0


def _parse_sensor_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigurationError(f"bad sensor list {text!r}") from exc


def _cmd_inject(args) -> int:
    trace = lds.load_trace(args.trace)
    support = _parse_sensor_list(args.sensors)
    state = faults.fault_state_from_support(trace.num_sensors, support)
    overrides = {}
    for item in args.param:
        if "=" not in item:
            raise ConfigurationError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = float(value)
    faulty = faults.inject_scaled(trace, state, args.kind, seed=args.seed, overrides=overrides)
    lds.save_trace(faulty, args.out)
    print(f"injected {args.kind} on sensors {support}, wrote {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    model = lds.load_model(args.model)
    traces = [
        lds.simulate(model, args.steps, seed=harness.derive_seed(args.seed, "calibration_trace", i))[1]
        for i in range(args.traces)
    ]
    pool_size = args.pool_size if args.pool_size > 0 else max(2, model.num_sensors // 2)
    threshold = kalman.calibrate_threshold(
        model,
        traces,
        pool_size=pool_size,
        quantile=args.quantile,
        num_samples=args.samples,
        seed=harness.derive_seed(args.seed, "calibration"),
        statistic_kind=args.statistic,
    )
    report = {"threshold": threshold, "quantile": args.quantile, "pool_size": pool_size}
    if args.loo:
        for variant in baselines.LOO_VARIANTS:
            report[f"loo_{variant}_threshold"] = baselines.calibrate_loo_threshold(
                model, traces, variant, args.quantile
            )
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    row, _ = harness.run_experiment(config, jobs=args.jobs)
    _emit([row], args.out)
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    if args.axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {args.axis!r}; expected one of {SWEEP_AXES}")
    caster = int if args.axis in ("num_tests", "model_order") else float
    values = [caster(tok) for tok in args.values.split(",") if tok.strip() != ""]
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    rows = harness.run_sweep(config, args.axis, values, jobs=args.jobs)
    _emit(rows, args.out)
    return 0


def _cmd_compare(args) -> int:
    base = _load_config(args)
    methods = [tok.strip() for tok in args.methods.split(",") if tok.strip() != ""]
    if len(methods) < 2:
        raise ConfigurationError("compare needs at least two methods")
    for m in methods:
        if m not in METHODS:
            raise ConfigurationError(f"unknown method {m!r}; expected one of {METHODS}")
    configs = [base.with_overrides(method=m) for m in methods]
    results = harness.compare_methods(configs, jobs=args.jobs)
    _emit([row for _, row, _ in results], args.out)
    return 0


def _cmd_show_config(args) -> int:
    config = _load_config(args)
    sys.stdout.write(config_to_text(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorgt",
                                     description="fault detection for sensor networks via group-tested Kalman filters")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="generate a random stable model and save it as JSON")
    p.add_argument("--state-dim", type=int, default=20)
    p.add_argument("--num-sensors", type=int, default=18)
    p.add_argument("--spectral-radius", type=float, default=0.95)
    p.add_argument("--process-noise", type=float, default=1e-3)
    p.add_argument("--signal-variance", type=float, default=64.0)
    p.add_argument("--meas-noise-fraction", type=float, default=0.10)
    p.add_argument("--num-inputs", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_model)

    p = sub.add_parser("simulate", help="simulate a sensor trace from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--input-mode", choices=("none", "gaussian"), default="none")
    p.add_argument("--input-variance", type=float, default=1.0)
    p.add_argument("--sample-period", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("inject", help="inject a fault into a saved trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--sensors", required=True, help="comma separated sensor indices")
    p.add_argument("--kind", choices=faults.KINDS, default="spike")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="fault parameter override (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("calibrate", help="calibrate the group-test threshold on clean traces")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--traces", type=int, default=4)
    p.add_argument("--pool-size", type=int, default=0, help="0 means half the sensors")
    p.add_argument("--quantile", type=float, default=0.99)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--statistic", choices=kalman.STATISTIC_KINDS, default="max_inf_norm")
    p.add_argument("--loo", action="store_true", help="also calibrate leave-one-out baselines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("run", help="run one experiment and print a CSV row")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="sweep one axis, one CSV row per value")
    _add_common(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma separated axis values")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="run several methods on identical trial data")
    _add_common(p)
    p.add_argument("--methods", required=True, help="comma separated method names")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("show-config", help="print the fully resolved config")
    _add_common(p)
    p.set_defaults(func=_cmd_show_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
