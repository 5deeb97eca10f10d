"""Command-line runner: ``rwre list``, ``rwre run`` and ``rwre report``.

Exit codes: 0 when every check passes, 2 when a check fails, 1 on errors.
Result files are byte-deterministic for a fixed seed; wall time only goes
to the terminal.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import math
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rwre import exact1d, stats
from rwre.env import SpecError, spec_from_config
from rwre.presets import CATALOG, Plot, Row, coerce_like, get_preset, list_presets
from rwre.walk import run_annealed

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
RESULT_FIELDS = ["preset", "seed", "name", "value", "ci_low", "ci_high", "target", "check", "passed", "module"]
REPORT_FIELDS = ["preset", "seed", "status", "checks", "failed", "anchor", "manifest"]
U64 = (1 << 64) - 1


class ConfigError(Exception):
    """Config problem with a ``path:line:column`` location."""

    def __init__(self, path, line: int, col: int, msg: str):
        super().__init__(f"{path}:{line}:{col}: {msg}")


# -- config ----------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    preset: str | None = None
    operation: str | None = None
    seed: int | None = None
    params: dict = field(default_factory=dict)
    laws: dict = field(default_factory=dict)
    out: str | None = None
    source: str = ""

    @property
    def label(self) -> str:
        return self.preset or f"op-{self.operation}"


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^(\s*)([^=:#;\s][^=:]*?)\s*[=:]\s*(.*)$")


def _locate(text: str) -> dict:
    """``{(section, key): (line, value column)}`` and ``{(section, None): (line, 1)}``."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = (i, line.index("[") + 1)
            continue
        m = _KEY.match(line)
        if m and section is not None and not line.lstrip().startswith(("#", ";")):
            where[(section, m.group(2).strip())] = (i, line.index(m.group(3)) + 1 if m.group(3) else len(line) + 1)
    return where


def parse_seed(text: str) -> int:
    s = int(text, 0)
    if not 0 <= s <= U64:
        raise ValueError(f"seed {text!r} is not an unsigned 64-bit integer")
    return s


def load_config(path) -> ExperimentConfig:
    """Read a ``key = value`` config.

    Sections: ``[experiment]`` (``preset`` or ``operation``, ``seed``, ``out``),
    ``[parameters]`` (overrides of preset parameters), ``[environment]`` (law
    for the ``main`` slot) and ``[environment.<slot>]`` for other slots.
    """
    path = Path(path)
    text = path.read_text()
    where = _locate(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str    # parameter names such as N are case-sensitive
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(path, exc.lineno, 1, "key outside any section") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(path, exc.lineno or 0, 1, f"duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(path, exc.lineno or 0, 1, f"duplicate section [{exc.section}]") from None
    except configparser.ParsingError as exc:
        line, raw = exc.errors[0]
        raise ConfigError(path, line, 1, f"cannot parse {raw.strip()!r}") from None

    def loc(section, key=None):
        return where.get((section, key), where.get((section, None), (1, 1)))

    if not cp.has_section("experiment"):
        raise ConfigError(path, 1, 1, "missing section [experiment]")
    exp = cp["experiment"]
    cfg = ExperimentConfig(source=str(path))
    cfg.preset = exp.get("preset")
    cfg.operation = exp.get("operation")
    if (cfg.preset is None) == (cfg.operation is None):
        raise ConfigError(path, *loc("experiment"), "[experiment] needs exactly one of 'preset' or 'operation'")
    if cfg.preset is not None and cfg.preset not in CATALOG:
        raise ConfigError(path, *loc("experiment", "preset"), f"unknown preset {cfg.preset!r}")
    if "seed" in exp:
        try:
            cfg.seed = parse_seed(exp["seed"])
        except ValueError as exc:
            raise ConfigError(path, *loc("experiment", "seed"), str(exc)) from None
    cfg.out = exp.get("out")
    for key in exp:
        if key not in ("preset", "operation", "seed", "out"):
            raise ConfigError(path, *loc("experiment", key), f"unknown key {key!r} in [experiment]")

    if cp.has_section("parameters"):
        preset = CATALOG.get(cfg.preset) if cfg.preset else None
        for key, value in cp["parameters"].items():
            if preset is not None:
                if key not in preset.params:
                    raise ConfigError(path, *loc("parameters", key),
                                      f"preset {cfg.preset!r} has no parameter {key!r}")
                try:
                    coerce_like(preset.params[key], value)
                except ValueError as exc:
                    raise ConfigError(path, *loc("parameters", key), str(exc)) from None
            cfg.params[key] = value

    for section in cp.sections():
        if section == "environment" or section.startswith("environment."):
            slot = "main" if section == "environment" else section.split(".", 1)[1]
            try:
                cfg.laws[slot] = spec_from_config(dict(cp[section]))
            except KeyError as exc:
                key = exc.args[0]
                kind = cp[section].get("kind")
                what = f"missing key {key!r}" + (f" for kind {kind!r}" if kind and key != "kind" else "")
                raise ConfigError(path, *loc(section), f"[{section}]: {what}") from None
            except (SpecError, ValueError) as exc:
                raise ConfigError(path, *loc(section), f"[{section}]: {exc}") from None
            if cfg.preset is not None and slot not in CATALOG[cfg.preset].laws:
                raise ConfigError(path, *loc(section), f"preset {cfg.preset!r} has no law slot {slot!r}")
        elif section not in ("experiment", "parameters"):
            raise ConfigError(path, *loc(section), f"unknown section [{section}]")
    if cfg.operation is not None and "main" not in cfg.laws:
        raise ConfigError(path, *loc("experiment", "operation"), "an operation needs an [environment] section")
    return cfg


# -- explicit operations ----------------------------------------------------------------

def _num(params, key, default, kind=float):
    return kind(float(params[key])) if key in params else default


def run_operation(cfg: ExperimentConfig, seed: int):
    """Rows for an explicit ``operation`` on the ``[environment]`` law.

    Exact operations come from :mod:`rwre.exact1d`; ``velocity``, ``tail_index``
    and ``aging`` simulate. Optional ``target`` and ``tolerance`` turn the
    headline value into a check.
    """
    spec, p, op = cfg.laws["main"], dict(cfg.params), cfg.operation
    target = _num(p, "target", math.nan)
    tol = _num(p, "tolerance", math.nan)
    p.pop("target", None)
    p.pop("tolerance", None)

    def checked(name, value, lo=math.nan, hi=math.nan, module=""):
        if math.isnan(target) or math.isnan(tol):
            return Row(name, value, lo, hi, module=module)
        return Row(name, value, lo, hi, target=target, check=f"|value - target| <= {tol:g}",
                   passed=abs(value - target) <= tol, module=module)

    if op in exact1d.OPERATIONS:
        r = exact1d.evaluate(op, spec, **p)
        if r.error:
            raise RuntimeError(r.error)
        return [checked(op, r.value, module="exact1d")], []
    if op == "velocity":
        N, n = _num(p, "N", 10**4, int), _num(p, "walkers", 200, int)
        ends = run_annealed(spec, N, n, seed, endpoints_only=True)
        est = stats.velocity(ends, N, seed=seed)
        return [checked("velocity", est.point, est.ci_low, est.ci_high, "stats.velocity")], []
    if op == "tail_index":
        cap = _num(p, "max_steps", 10**8, int)
        tau = stats.annealed_tau_sample(spec, _num(p, "samples", 10**4, int), seed, cap)
        h = stats.tail_index(tau, _num(p, "k_fraction", 0.05), cap=cap)
        return [checked("tail_index", h.estimate.point, h.estimate.ci_low, h.estimate.ci_high,
                        "stats.tail_index")], []
    if op == "aging":
        est = stats.aging_correlator(spec, _num(p, "n", 100, int), _num(p, "h", 2.0), _num(p, "eta", 0.5),
                                     _num(p, "samples", 1000, int), seed)
        return [checked("aging", est.point, est.ci_low, est.ci_high, "stats.aging_correlator")], []
    known = ", ".join(list(exact1d.OPERATIONS) + ["velocity", "tail_index", "aging"])
    raise KeyError(f"unknown operation {op!r}; known: {known}")


# -- output ----------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "pass" if x else "fail"
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def results_csv(label: str, seed: int, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([label, seed, r.name, _fmt(r.value), _fmt(r.ci_low), _fmt(r.ci_high), _fmt(r.target),
                    r.check, _fmt(r.passed), r.module])
    return buf.getvalue().encode()


def render_svg(plot: Plot) -> bytes:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "rwre", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for label, x, y in plot.series:
            ax.plot(x, y, marker="o", ms=3, lw=1, label=label)
        for label, x, y in plot.reference:
            ax.plot(x, y, ls="--", lw=1, color="0.3", label=label)
        if plot.loglog:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_title(plot.title)
        ax.set_xlabel(plot.xlabel)
        ax.set_ylabel(plot.ylabel)
        ax.legend(fontsize=8)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def _manifest(cfg_echo: dict, rows, files: dict) -> bytes:
    checks = [r for r in rows if r.passed is not None]
    failed = [r for r in checks if not r.passed]
    lines = [f"{k} = {v}" for k, v in cfg_echo.items()]
    lines += [f"status = {'pass' if not failed else 'fail'}", f"checks = {len(checks)}", f"failed = {len(failed)}"]
    lines += [f"file.{name} = sha256:{hashlib.sha256(data).hexdigest()}" for name, data in sorted(files.items())]
    return ("\n".join(lines) + "\n").encode()


@dataclass(frozen=True)
class RunOutcome:
    label: str
    seed: int
    directory: str
    status: str          # pass / fail / error
    message: str = ""
    seconds: float = 0.0


def execute(cfg: ExperimentConfig, seed: int, out: Path) -> RunOutcome:
    """Run one preset or operation and write its result directory."""
    t0 = time.perf_counter()
    directory = out / f"{cfg.label}-s{seed}"
    try:
        if cfg.preset is not None:
            preset = get_preset(cfg.preset)
            ctx = preset.context(seed, cfg.params, cfg.laws)
            rows, plots = preset.runner(ctx)
            echo = {"preset": preset.id, "description": preset.description, "anchor": preset.anchor,
                    "budget_s": preset.budget_s, "seed": seed}
            echo.update({f"param.{k}": _echo(v) for k, v in sorted(ctx.params.items())})
            echo.update({f"law.{k}": v.label for k, v in sorted(ctx.laws.items())})
        else:
            rows, plots = run_operation(cfg, seed)
            echo = {"preset": cfg.label, "operation": cfg.operation, "seed": seed}
            echo.update({f"param.{k}": v for k, v in sorted(cfg.params.items())})
            echo["law.main"] = cfg.laws["main"].label
        if cfg.source:
            echo["config"] = cfg.source
        files = {"results.csv": results_csv(cfg.label, seed, rows)}
        for plot in plots:
            files[f"{plot.name}.svg"] = render_svg(plot)
        for name, data in files.items():
            atomic_write(directory / name, data)
        atomic_write(directory / "manifest.txt", _manifest(echo, rows, files))
        status = "fail" if any(r.passed is False for r in rows) else "pass"
        return RunOutcome(cfg.label, seed, str(directory), status, seconds=time.perf_counter() - t0)
    except Exception as exc:  # reported per run, mapped to exit code 1
        return RunOutcome(cfg.label, seed, str(directory), "error", f"{type(exc).__name__}: {exc}",
                          time.perf_counter() - t0)


def _echo(v) -> str:
    if isinstance(v, (tuple, list)):
        return " ".join(str(t) for t in v)
    return str(v)


def _exit_code(outcomes) -> int:
    if any(o.status == "error" for o in outcomes):
        return EXIT_ERROR
    if any(o.status == "fail" for o in outcomes):
        return EXIT_FAIL
    return EXIT_PASS


# -- report ------------------------------------------------------------------------------

def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def find_manifests(inputs) -> list[Path]:
    found = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found.extend(sorted(p.rglob("manifest.txt")))
        elif p.is_file():
            found.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {item}")
    return found


def build_report(manifests) -> tuple[bytes, str, int]:
    """Merged CSV (one row per manifest), a text summary and the exit code."""
    if not manifests:
        raise ValueError("no result manifests given")
    entries = []
    for m in manifests:
        d = read_manifest(m)
        if "preset" not in d or "status" not in d:
            raise ValueError(f"{m} is not a result manifest")
        entries.append((d["preset"], int(d.get("seed", 0)), d["status"], d.get("checks", ""), d.get("failed", ""),
                        d.get("anchor", d.get("operation", "")), str(m)))
    entries.sort(key=lambda e: (e[0], e[1], e[6]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    w.writerows(entries)
    width = max(len(e[0]) for e in entries)
    lines = [f"{e[0]:<{width}}  seed={e[1]:<20d}  {e[2].upper():<4}  checks={e[3]} failed={e[4]}" for e in entries]
    n_fail = sum(e[2] != "pass" for e in entries)
    lines.append(f"{len(entries)} results, {len(entries) - n_fail} passed, {n_fail} failed")
    return buf.getvalue().encode(), "\n".join(lines) + "\n", EXIT_FAIL if n_fail else EXIT_PASS


# -- entry point -------------------------------------------------------------------------

def _cmd_list(args) -> int:
    presets = list_presets()
    width = max(len(p.id) for p in presets)
    for p in presets:
        budget = f"{p.budget_s // 60} min" if p.budget_s >= 60 else f"{p.budget_s} s"
        print(f"{p.id:<{width}}  {budget:>7}  {p.description}  [anchor: {p.anchor}]")
    return EXIT_PASS


def _cmd_run(args) -> int:
    configs = []
    if args.config:
        try:
            configs.append(load_config(args.config))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    for name in args.preset or []:
        names = list(CATALOG) if name == "all" else [name]
        for n in names:
            if n not in CATALOG:
                print(f"error: unknown preset {n!r} (see 'rwre list')", file=sys.stderr)
                return EXIT_ERROR
            configs.append(ExperimentConfig(preset=n))
    if not configs:
        print("error: give --preset NAME or --config PATH", file=sys.stderr)
        return EXIT_ERROR
    jobs = []
    for cfg in configs:
        seed = args.seed if args.seed is not None else cfg.seed
        if seed is None:
            print(f"error: {cfg.label}: a seed is required (--seed or [experiment] seed)", file=sys.stderr)
            return EXIT_ERROR
        out = Path(args.out or cfg.out or "results")
        jobs.append((cfg, seed, out))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(execute, *zip(*jobs)))
    else:
        outcomes = [execute(*j) for j in jobs]
    for o in outcomes:
        line = f"{o.label:<24} seed={o.seed:<20d} {o.status.upper():<5} {o.seconds:8.1f}s  {o.directory}"
        print(line + (f"  {o.message}" if o.message else ""), file=sys.stderr if o.status == "error" else sys.stdout)
    return _exit_code(outcomes)


def _cmd_report(args) -> int:
    try:
        manifests = find_manifests(args.inputs)
        table, summary, code = build_report(manifests)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out or ".")
    atomic_write(out / "report.csv", table)
    atomic_write(out / "report.txt", summary.encode())
    sys.stdout.write(summary)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rwre", description="Random walks in random environments: experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="show the preset catalog")
    run = sub.add_parser("run", help="run presets or a config")
    run.add_argument("--config", metavar="PATH")
    run.add_argument("--preset", metavar="NAME", action="append", help="repeatable; 'all' runs the catalog")
    run.add_argument("--seed", metavar="U64", type=parse_seed)
    run.add_argument("--out", metavar="DIR")
    run.add_argument("--jobs", metavar="N", type=int, default=1)
    rep = sub.add_parser("report", help="merge result manifests")
    rep.add_argument("inputs", nargs="*", metavar="MANIFEST_OR_DIR")
    rep.add_argument("--out", metavar="DIR")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_ERROR
    return {"list": _cmd_list, "run": _cmd_run, "report": _cmd_report}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
