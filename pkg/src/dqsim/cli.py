"""Experiment runner: config parsing, orchestration, and artifact emission.

Configs are flat sectioned text ("[section]" headers, "key = value" lines,
full-line # comments) with typed scalars and bracketed arrays.  Parsing
validates every line and reports all problems at once, with line numbers.
Every output directory receives the exact config text, the seeds, and a
tool-version stamp, so any artifact can be replayed bit for bit.

Verbs: run (single trace), compare (paired fixed-vs-dynamic arms calibrated
to one quantization budget), sweep (grid over widths or schedule kinds),
and verify (the self-contained analytical check suites).  Exit codes:
0 success, 1 usage/config error, 2 divergence, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .schedule import (
    SchedulerState,
    alpha_closed_form,
    budget_satisfaction,
    fixed_bits_for_budget,
)
from .sim import (
    DivergenceError,
    ObjectiveSpec,
    OracleSpec,
    RunConfig,
    RunTrace,
    ScheduleSpec,
    build_objective,
    run,
    theory_report_for,
    write_trace,
)
from .verify import VERIFIERS

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "parse_config",
    "format_config",
    "emit_summary",
    "run_experiment",
    "run_comparison",
    "ComparisonSummary",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_VERIFY_FAILED = 3


class ConfigError(ValueError):
    """Carries every problem found in a config, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: what to execute plus the full run configuration."""

    kind: str = "single"  # single | compare | sweep | verify
    check: str = "lemma1"  # verify suite name
    sweep: str = "bits"  # bits | schedule
    sweep_bits: tuple = (2, 3, 4, 5, 6, 7, 8)
    sweep_schedules: tuple = ("sign", "ternary", "fixed", "dynamic")
    compare_fixed_bits: int = 6
    calibration: str = "dynamic-to-fixed"  # none | dynamic-to-fixed | fixed-to-dynamic
    formats: tuple = ("csv", "json")
    seeds: tuple = (0, 0)  # inclusive range for multi-seed verbs
    run: RunConfig = field(default_factory=RunConfig)


# ---------------------------------------------------------------------------
# config text format
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([a-z][a-z0-9_-]*)\]$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")
_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse_scalar(token: str):
    token = token.strip()
    if _INT_RE.match(token):
        return int(token)
    if token in ("true", "false"):
        return token == "true"
    try:
        return float(token)
    except ValueError:
        return token


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part) for part in inner.split(",")]
    return _parse_scalar(raw)


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt_value(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _is_float(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_choice(*choices):
    def check(v):
        if v not in choices:
            return f"must be one of {', '.join(map(str, choices))}, got {v!r}"
        return None

    return check


def _check_range(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if not _is_float(v):
            return f"must be a number, got {v!r}"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}, got {v}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}, got {v}"
        return None

    return check


def _check_int(lo=None, hi=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return f"must be an integer, got {v!r}"
        if lo is not None and v < lo:
            return f"must be >= {lo}, got {v}"
        if hi is not None and v > hi:
            return f"must be <= {hi}, got {v}"
        return None

    return check


def _check_int_list(lo, hi):
    item = _check_int(lo, hi)

    def check(v):
        if not isinstance(v, list) or not v:
            return f"must be a non-empty array of integers, got {v!r}"
        for entry in v:
            err = item(entry)
            if err:
                return err
        return None

    return check


def _check_str_list(*choices):
    def check(v):
        if not isinstance(v, list) or not v:
            return f"must be a non-empty array, got {v!r}"
        for entry in v:
            if entry not in choices:
                return f"entries must be among {choices}, got {entry!r}"
        return None

    return check


# one validator per section/key; parsed values are collected into keyword
# dicts for the config dataclasses below
_SCHEMA = {
    "experiment": {
        "kind": _check_choice("single", "compare", "sweep", "verify"),
        "check": _check_choice(*sorted(VERIFIERS)),
        "sweep": _check_choice("bits", "schedule"),
        "sweep_bits": _check_int_list(2, 32),
        "sweep_schedules": _check_str_list("sign", "ternary", "fixed", "dynamic"),
        "compare_fixed_bits": _check_int(2, 32),
        "calibration": _check_choice("none", "dynamic-to-fixed", "fixed-to-dynamic"),
        "formats": _check_str_list("csv", "json"),
        "seeds": _check_int_list(0, 2**31 - 1),
    },
    "objective": {
        "kind": _check_choice("quadratic-isotropic", "quadratic", "logistic"),
        "d": _check_int(1, 10**6),
        "lam": _check_range(lo=0, lo_open=True),
        "mu": _check_range(lo=0, lo_open=True),
        "L": _check_range(lo=0, lo_open=True),
        "hessian_seed": _check_int(0),
        "n": _check_int(1),
        "ridge": _check_range(lo=0),
        "label_noise": _check_range(lo=0),
        "data_seed": _check_int(0),
    },
    "oracle": {
        "kind": _check_choice("gaussian", "minibatch"),
        "sigma": _check_range(lo=0),
        "batch_size": _check_int(1),
        "shard_mode": _check_choice("split", "replicate"),
        "calibration_draws": _check_int(0),
    },
    "run": {
        "W": _check_int(1),
        "T": _check_int(1),
        "eta": _check_range(lo=0, lo_open=True),
        "seed": _check_int(0),
        "p": _check_range(lo=0, lo_open=True),
        "b_pre": _check_choice(32, 64),
        "x0": _check_choice("ones", "zeros", "gaussian"),
        "x0_scale": _check_range(),
        "x0_seed": _check_int(0),
    },
    "schedule": {
        "kind": _check_choice("fixed", "ternary", "sign", "dynamic"),
        "bits": _check_int(2, 32),
        "epsilon": _check_range(lo=0, lo_open=True),
        "gamma": _check_range(lo=0, hi=1, hi_open=True),
        "tau": _check_int(1),
        "b_min": _check_int(2, 32),
        "b_max": _check_int(2, 32),
        "b0": _check_int(2, 32),
        "alpha_source": _check_choice("estimate", "closed_form"),
        "eps_q_hat": _check_range(lo=0, lo_open=True),
    },
}

_FLOAT_KEYS = {
    ("objective", "lam"),
    ("objective", "mu"),
    ("objective", "L"),
    ("objective", "ridge"),
    ("objective", "label_noise"),
    ("oracle", "sigma"),
    ("run", "eta"),
    ("run", "p"),
    ("run", "x0_scale"),
    ("schedule", "epsilon"),
    ("schedule", "gamma"),
    ("schedule", "eps_q_hat"),
}


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate config text; raises ConfigError listing every
    problem (with line numbers) rather than stopping at the first."""
    errors: list[str] = []
    values: dict[tuple, object] = {}
    first_line: dict[tuple, int] = {}
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            if section not in _SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            continue
        m = _KEY_RE.match(line)
        if not m:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside any known section")
            continue
        key, raw_value = m.group(1), m.group(2)
        if key not in _SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        slot = (section, key)
        if slot in first_line:
            errors.append(
                f"line {lineno}: duplicate key {key!r} in [{section}] "
                f"(first defined at line {first_line[slot]})"
            )
            continue
        first_line[slot] = lineno
        value = _parse_value(raw_value)
        err = _SCHEMA[section][key](value)
        if err:
            errors.append(f"line {lineno}: [{section}] {key}: {err}")
            continue
        if slot in _FLOAT_KEYS:
            value = float(value)
        values[slot] = value

    if errors:
        raise ConfigError(errors)

    def section_kwargs(name: str) -> dict:
        return {key: v for (sec, key), v in values.items() if sec == name}

    exp_kwargs = section_kwargs("experiment")
    for key in ("sweep_bits", "sweep_schedules", "formats", "seeds"):
        if key in exp_kwargs:
            exp_kwargs[key] = tuple(exp_kwargs[key])
    if "seeds" in exp_kwargs and len(exp_kwargs["seeds"]) != 2:
        raise ConfigError(["[experiment] seeds: must be a [first, last] pair"])

    try:
        config = RunConfig(
            objective=ObjectiveSpec(**section_kwargs("objective")),
            oracle=OracleSpec(**section_kwargs("oracle")),
            schedule=ScheduleSpec(**section_kwargs("schedule")),
            **section_kwargs("run"),
        )
        return ExperimentSpec(run=config, **exp_kwargs)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def format_config(spec: ExperimentSpec) -> str:
    """Canonical text for a spec; parse_config(format_config(s)) == s."""
    lines: list[str] = []

    def emit(section: str, payload: dict):
        lines.append(f"[{section}]")
        for key in _SCHEMA[section]:
            if key in payload and payload[key] is not None:
                lines.append(f"{key} = {_fmt_value(payload[key])}")
        lines.append("")

    emit(
        "experiment",
        {
            "kind": spec.kind,
            "check": spec.check,
            "sweep": spec.sweep,
            "sweep_bits": list(spec.sweep_bits),
            "sweep_schedules": list(spec.sweep_schedules),
            "compare_fixed_bits": spec.compare_fixed_bits,
            "calibration": spec.calibration,
            "formats": list(spec.formats),
            "seeds": list(spec.seeds),
        },
    )
    emit("objective", dataclasses.asdict(spec.run.objective))
    emit("oracle", dataclasses.asdict(spec.run.oracle))
    run_payload = spec.run.to_dict()
    emit(
        "run",
        {k: run_payload[k] for k in _SCHEMA["run"]},
    )
    emit("schedule", dataclasses.asdict(spec.run.schedule))
    return "\n".join(lines)


def defaults_table() -> str:
    """The one documented table of every config key and its default."""
    spec = ExperimentSpec()
    text = format_config(spec)
    return "# every key with its default value; omit any of them\n" + text


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

SUMMARY_HEADER = "schedule,final_loss,final_gap,cum_bits,bits_vs_32bit_ratio"


def _full_precision_bits(config: RunConfig, d: int) -> int:
    return config.W * config.T * (32 * d + config.b_pre)


def _summary_row(label, final_loss, final_gap, cum_bits, reference_bits) -> str:
    gap = "" if final_gap is None else f"{final_gap:.17g}"
    ratio = cum_bits / reference_bits
    return f"{label},{final_loss:.17g},{gap},{cum_bits:.17g},{ratio:.17g}"


def emit_summary(traces: list[RunTrace], labels: list[str] | None = None) -> str:
    """One CSV row per trace: loss, gap, bits, and cost relative to an
    uncompressed 32-bit schedule of the same shape."""
    if not traces:
        raise ValueError("no traces to summarize")
    labels = labels or [t.config.schedule.kind for t in traces]
    lines = [SUMMARY_HEADER]
    for label, trace in zip(labels, traces):
        d = build_objective(trace.config.objective).d
        lines.append(
            _summary_row(
                label,
                trace.final_loss,
                trace.final_gap,
                float(trace.total_bits),
                _full_precision_bits(trace.config, d),
            )
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# comparison engine
# ---------------------------------------------------------------------------


@dataclass
class ComparisonSummary:
    """Seed-paired fixed-vs-dynamic outcome at one quantization budget."""

    fixed_bits: list
    seeds: list
    fixed_loss: np.ndarray
    dynamic_loss: np.ndarray
    fixed_total_bits: np.ndarray
    dynamic_total_bits: np.ndarray

    @property
    def n(self) -> int:
        return len(self.seeds)

    def loss_diff_mean(self) -> float:
        return float(np.mean(self.dynamic_loss - self.fixed_loss))

    def loss_diff_se(self) -> float:
        diff = self.dynamic_loss - self.fixed_loss
        return float(diff.std(ddof=1) / math.sqrt(self.n)) if self.n > 1 else 0.0

    def bits_ci(self, which: str) -> tuple[float, float]:
        arr = self.dynamic_total_bits if which == "dynamic" else self.fixed_total_bits
        mean = float(arr.mean())
        half = 1.96 * float(arr.std(ddof=1) / math.sqrt(self.n)) if self.n > 1 else 0.0
        return mean - half, mean + half

    def win_fraction(self) -> float:
        return float(np.mean(self.dynamic_total_bits <= self.fixed_total_bits))

    def bits_saving(self) -> float:
        """Relative communication saving of the dynamic arm (mean bits)."""
        return 1.0 - float(self.dynamic_total_bits.mean() / self.fixed_total_bits.mean())

    def to_dict(self) -> dict:
        dyn_lo, dyn_hi = self.bits_ci("dynamic")
        fix_lo, fix_hi = self.bits_ci("fixed")
        return {
            "n_seeds": self.n,
            "fixed_bits_per_round": self.fixed_bits,
            "loss_mean_fixed": float(self.fixed_loss.mean()),
            "loss_mean_dynamic": float(self.dynamic_loss.mean()),
            "loss_diff_mean": self.loss_diff_mean(),
            "loss_diff_se": self.loss_diff_se(),
            "bits_mean_fixed": float(self.fixed_total_bits.mean()),
            "bits_mean_dynamic": float(self.dynamic_total_bits.mean()),
            "bits_ci95_fixed": [fix_lo, fix_hi],
            "bits_ci95_dynamic": [dyn_lo, dyn_hi],
            "bits_saving": self.bits_saving(),
            "win_fraction": self.win_fraction(),
        }


def run_comparison(spec: ExperimentSpec) -> ComparisonSummary:
    """Paired fixed-vs-dynamic runs over the spec's seed range.

    dynamic-to-fixed calibration runs the fixed arm first and hands its
    realized quantization-noise budget to the dynamic schedule;
    fixed-to-dynamic runs the dynamic arm at its configured budget and picks
    the smallest constant width meeting that budget on the realized norm
    history; none runs both arms exactly as configured.
    """
    base = spec.run
    obj = build_objective(base.objective)
    L, mu = obj.constants()
    alpha = alpha_closed_form(base.eta, L, mu)
    seeds = list(range(spec.seeds[0], spec.seeds[1] + 1))

    fixed_bits_used: list[int] = []
    fixed_loss, dyn_loss, fixed_bits_tot, dyn_bits_tot = [], [], [], []
    for seed in seeds:
        cfg = base.with_seed(seed)
        if spec.calibration == "fixed-to-dynamic":
            dyn_sched = dataclasses.replace(cfg.schedule, kind="dynamic")
            dyn = run(dataclasses.replace(cfg, schedule=dyn_sched))
            eps_q_hat = dyn_sched.eps_q_hat
            if eps_q_hat is None:
                eps_q_hat = SchedulerState(
                    T=cfg.T,
                    W=cfg.W,
                    d=obj.d,
                    eta=cfg.eta,
                    L=L,
                    mu=mu,
                    epsilon=dyn_sched.epsilon,
                    gamma=dyn_sched.gamma,
                ).eps_q_hat
            b_fixed = fixed_bits_for_budget(dyn.gbar, alpha, eps_q_hat)
            fixed = run(
                dataclasses.replace(
                    cfg, schedule=ScheduleSpec(kind="fixed", bits=b_fixed)
                )
            )
        else:
            b_fixed = spec.compare_fixed_bits
            fixed = run(
                dataclasses.replace(
                    cfg, schedule=ScheduleSpec(kind="fixed", bits=b_fixed)
                )
            )
            sched = cfg.schedule
            if spec.calibration == "dynamic-to-fixed":
                budget = budget_satisfaction(fixed.bits, fixed.gbar, alpha)
                sched = dataclasses.replace(sched, kind="dynamic", eps_q_hat=budget)
            dyn = run(dataclasses.replace(cfg, schedule=sched))

        fixed_bits_used.append(b_fixed)
        fixed_loss.append(fixed.final_loss)
        dyn_loss.append(dyn.final_loss)
        fixed_bits_tot.append(fixed.total_bits)
        dyn_bits_tot.append(dyn.total_bits)

    return ComparisonSummary(
        fixed_bits=fixed_bits_used,
        seeds=seeds,
        fixed_loss=np.asarray(fixed_loss),
        dynamic_loss=np.asarray(dyn_loss),
        fixed_total_bits=np.asarray(fixed_bits_tot, dtype=np.float64),
        dynamic_total_bits=np.asarray(dyn_bits_tot, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# experiment execution and artifact layout
# ---------------------------------------------------------------------------


def _write_manifest(out: Path, spec: ExperimentSpec, config_text: str, command: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(config_text)
    manifest = {
        "tool": "dqsim",
        "version": __version__,
        "command": command,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "kind": spec.kind,
        "seed": spec.run.seed,
        "seeds": list(spec.seeds),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _emit_trace(out: Path, name: str, trace: RunTrace, formats) -> None:
    report = theory_report_for(trace)
    csv_path = out / f"{name}.csv" if "csv" in formats else None
    json_path = out / f"{name}.json" if "json" in formats else None
    write_trace(trace, csv_path, json_path, report)


def _do_single(spec: ExperimentSpec, out: Path) -> int:
    trace = run(spec.run)
    _emit_trace(out, "trace", trace, spec.formats)
    (out / "summary.csv").write_text(emit_summary([trace]))
    print(f"run complete: final loss {trace.final_loss:.6g}, "
          f"{trace.total_bits} bits, artifacts in {out}")
    return EXIT_OK


def _do_compare(spec: ExperimentSpec, out: Path) -> int:
    summary = run_comparison(spec)
    stats = summary.to_dict()
    (out / "compare.json").write_text(json.dumps(stats, indent=2) + "\n")
    d = build_objective(spec.run.objective).d
    ref = _full_precision_bits(spec.run, d)
    rows = [SUMMARY_HEADER]
    rows.append(
        _summary_row(
            f"fixed-{summary.fixed_bits[0]}",
            stats["loss_mean_fixed"],
            None,
            stats["bits_mean_fixed"],
            ref,
        )
    )
    rows.append(
        _summary_row(
            "dynamic", stats["loss_mean_dynamic"], None, stats["bits_mean_dynamic"], ref
        )
    )
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    print(
        f"compare complete over {summary.n} seeds: "
        f"loss diff {stats['loss_diff_mean']:.3g} +/- {stats['loss_diff_se']:.3g}, "
        f"bits saving {100 * stats['bits_saving']:.1f}%, "
        f"win fraction {stats['win_fraction']:.2f}"
    )
    return EXIT_OK


def _sweep_entries(spec: ExperimentSpec):
    if spec.sweep == "bits":
        for b in spec.sweep_bits:
            yield f"b{b}", dataclasses.replace(
                spec.run, schedule=ScheduleSpec(kind="fixed", bits=b)
            )
    else:
        for kind in spec.sweep_schedules:
            sched = dataclasses.replace(spec.run.schedule, kind=kind)
            if kind == "ternary":
                sched = dataclasses.replace(sched, bits=2)
            yield kind, dataclasses.replace(spec.run, schedule=sched)


def _do_sweep(spec: ExperimentSpec, out: Path) -> int:
    traces, labels = [], []
    for label, cfg in _sweep_entries(spec):
        entry_dir = out / label
        entry_dir.mkdir(parents=True, exist_ok=True)
        trace = run(cfg)
        _emit_trace(entry_dir, "trace", trace, spec.formats)
        traces.append(trace)
        labels.append(label)
    (out / "summary.csv").write_text(emit_summary(traces, labels))
    print(f"sweep complete: {len(traces)} settings, artifacts in {out}")
    return EXIT_OK


def _do_verify(spec: ExperimentSpec, out: Path | None) -> int:
    result = VERIFIERS[spec.check](seed=spec.run.seed)
    print(result.report())
    if out is not None:
        (out / "verify.txt").write_text(result.report() + "\n")
        (out / "verify.json").write_text(
            json.dumps(
                {"check": spec.check, "passed": result.passed, "lines": result.lines},
                indent=2,
            )
            + "\n"
        )
    return EXIT_OK if result.passed else EXIT_VERIFY_FAILED


def run_experiment(
    spec: ExperimentSpec,
    out_dir: str | Path,
    config_text: str | None = None,
    command: str = "",
) -> int:
    """Execute a spec and write its artifacts under out_dir."""
    out = Path(out_dir)
    _write_manifest(out, spec, config_text or format_config(spec), command)
    try:
        if spec.kind == "single":
            return _do_single(spec, out)
        if spec.kind == "compare":
            return _do_compare(spec, out)
        if spec.kind == "sweep":
            return _do_sweep(spec, out)
        return _do_verify(spec, out)
    except DivergenceError as exc:
        partial = exc.trace
        write_trace(partial, out / "diverged.csv", out / "diverged.json")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _parse_seed_range(text: str) -> tuple[int, int]:
    m = re.match(r"^(\d+)\.\.(\d+)$", text)
    if not m:
        raise argparse.ArgumentTypeError("seed range must look like 0..49")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise argparse.ArgumentTypeError("seed range must be nondecreasing")
    return lo, hi


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqsim",
        description=__doc__.split("\n\n")[0],
        epilog="Run `dqsim defaults` for the full table of config keys.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--format", help="comma-separated subset of csv,json")

    common(sub.add_parser("run", help="single run, emit trace + theory report"))
    pc = sub.add_parser("compare", help="paired fixed-vs-dynamic comparison")
    common(pc)
    pc.add_argument("--seeds", type=_parse_seed_range, help="seed range like 0..49")
    ps = sub.add_parser("sweep", help="grid over widths or schedule kinds")
    common(ps)
    pv = sub.add_parser("verify", help="analytical verification suites")
    pv.add_argument("check", choices=sorted(VERIFIERS))
    pv.add_argument("--out", help="artifact directory (optional)")
    pv.add_argument("--seed", type=int, default=0)
    sub.add_parser("defaults", help="print every config key with its default")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.verb == "defaults":
        print(defaults_table())
        return EXIT_OK

    if args.verb == "verify":
        spec = ExperimentSpec(
            kind="verify",
            check=args.check,
            run=RunConfig(seed=args.seed),
        )
        if args.out:
            return run_experiment(spec, args.out, command="verify " + args.check)
        result = VERIFIERS[args.check](seed=args.seed)
        print(result.report())
        return EXIT_OK if result.passed else EXIT_VERIFY_FAILED

    config_path = Path(args.config)
    if not config_path.is_file():
        print(f"error: config file {config_path} not found", file=sys.stderr)
        return EXIT_USAGE
    text = config_path.read_text()
    try:
        spec = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    verb_kind = "single" if args.verb == "run" else args.verb
    if spec.kind not in ("single", verb_kind):
        print(
            f"error: config declares kind={spec.kind!r} but verb is {args.verb!r}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    overrides = {"kind": verb_kind}
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    if args.format:
        formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
        bad = [f for f in formats if f not in ("csv", "json")]
        if bad:
            print(f"error: unknown formats {bad}", file=sys.stderr)
            return EXIT_USAGE
        overrides["formats"] = formats
    if args.seed is not None:
        overrides["run"] = spec.run.with_seed(args.seed)
    if overrides:
        spec = dataclasses.replace(spec, **overrides)

    command = "dqsim " + " ".join(argv)
    return run_experiment(spec, args.out, config_text=text, command=command)


if __name__ == "__main__":
    sys.exit(main())
