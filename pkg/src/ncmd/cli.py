"""Command-line runner for the experiment catalog.

    ncmd run CONFIG.toml [--out DIR] [--threads N] [--seed-override SEED]
    ncmd list [--json] [--template FAMILY]

``run`` writes ``<id>.report.json`` and one ``<id>.<table>.csv`` per table
and exits 0 when every verdict passes, 1 when any fails, and 2 on a config
error.  The output directory is ``--out`` if given, else the
``NCMD_OUTPUT_DIR`` environment variable, else the config's ``output``
key (relative to the config file), else the current directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import re
import sys
import time
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .experiments import (
    FAMILIES,
    ConfigError,
    Outcome,
    run_experiment,
    template,
    validate,
)

ENV_OUT = "NCMD_OUTPUT_DIR"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# ------------------------------------------------------------ formatting


def format_cell(v):
    """Deterministic text for one CSV cell; infinities as 'inf'/'-inf'."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return format_cell(v) if not math.isfinite(v) else v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_csv(path: Path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_cell(c) for c in r])


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"


def to_toml(cfg: dict) -> str:
    """Small TOML writer for config mappings (scalars, arrays, tables, arrays of tables)."""
    lines = []
    tables = []
    for k, v in cfg.items():
        if isinstance(v, dict):
            tables.append((k, v))
        elif isinstance(v, list) and v and all(isinstance(x, dict) for x in v):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    for name, body in tables:
        items = body if isinstance(body, list) else [body]
        header = f"[[{name}]]" if isinstance(body, list) else f"[{name}]"
        for item in items:
            lines.append("")
            lines.append(header)
            sub = []
            for k, v in item.items():
                if isinstance(v, list) and v and all(isinstance(x, dict) for x in v):
                    sub.append((k, v))
                else:
                    lines.append(f"{k} = {_toml_value(v)}")
            for k, v in sub:
                for x in v:
                    lines.append("")
                    lines.append(f"[[{name}.{k}]]")
                    lines.extend(f"{kk} = {_toml_value(vv)}" for kk, vv in x.items())
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- config


def locate_line(text: str, path: str):
    """Best-effort 1-based line of a dotted field path in TOML source."""
    parts = re.split(r"\.", re.sub(r"\[\d+\]", "", path))
    if not parts or not parts[-1]:
        return None
    key = parts[-1]
    section = ".".join(parts[:-1])
    current = ""
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\[?\s*([^\]]+?)\s*\]\]?", s)
        if m:
            current = m.group(1)
            if current == path:
                return i
            continue
        if re.match(rf"^{re.escape(key)}\s*=", s) and (current == section or not section and not current):
            return i
    return None


def load_config(path):
    """Parse and validate; raises ConfigError with a line number where possible."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config ({e.strerror})") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError("<toml>", str(e), int(m.group(1)) if m else None) from None
    try:
        return validate(raw)
    except ConfigError as e:
        if e.line is None:
            e.line = locate_line(text, e.path)
            e.args = (e.describe(),)
        raise


# -------------------------------------------------------------------- run


def _output_dir(args, cfg, config_path):
    if args.out:
        return Path(args.out)
    env = os.environ.get(ENV_OUT)
    if env:
        return Path(env)
    if cfg.output:
        out = Path(cfg.output)
        return out if out.is_absolute() else Path(config_path).parent / out
    return Path(".")


def write_outputs(outdir: Path, cfg, outcome: Outcome, elapsed):
    outdir.mkdir(parents=True, exist_ok=True)
    files = {}
    for t in outcome.tables:
        fname = f"{cfg.id}.{t.name}.csv"
        write_csv(outdir / fname, t.columns, t.rows)
        files[t.name] = {"file": fname, "columns": t.columns, "rows": len(t.rows)}
    passed = all(v.passed for v in outcome.verdicts)
    report = {
        "id": cfg.id,
        "family": cfg.family,
        "seed": cfg.seed,
        "anchor": FAMILIES[cfg.family].anchor,
        "config": _jsonable(cfg.raw),
        "status": "PASS" if passed else "FAIL",
        "verdicts": [
            {"check": v.name, "status": v.status, "table": v.table, "detail": v.detail}
            for v in outcome.verdicts
        ],
        "tables": files,
        "notes": _jsonable(outcome.notes),
        "versions": {
            "ncmd": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timing": {"elapsed_seconds": round(elapsed, 3)},
    }
    path = outdir / f"{cfg.id}.report.json"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    return path, passed


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            if not 0 <= args.seed_override < 2**64:
                raise ConfigError("--seed-override", "must be an integer in [0, 2^64)")
            cfg.seed = args.seed_override
            cfg.raw = dict(cfg.raw, seed=args.seed_override)
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        start = time.perf_counter()
        outcome = run_experiment(cfg, threads=args.threads)
    except ConfigError as e:
        print(f"config error: {e.describe()}", file=sys.stderr)
        return EXIT_CONFIG
    report, passed = write_outputs(_output_dir(args, cfg, args.config), cfg, outcome,
                                   time.perf_counter() - start)
    for v in outcome.verdicts:
        print(f"{v.status}  {cfg.id}  {v.name}  [{v.detail}]")
    print(f"report: {report}")
    return EXIT_PASS if passed else EXIT_FAIL


# ------------------------------------------------------------------- list


def catalog():
    """Family id -> schema and anchor, as plain data."""
    out = {}
    for fid, spec in FAMILIES.items():
        out[fid] = {
            "summary": spec.summary,
            "anchor": spec.anchor,
            "blocks": list(spec.blocks),
            "required": [
                {"name": f.name, "constraint": f.constraint, "doc": f.doc}
                for f in spec.params if f.required
            ],
            "optional": [
                {"name": f.name, "constraint": f.constraint, "default": _jsonable(f.default),
                 "doc": f.doc}
                for f in spec.params if not f.required
            ],
        }
    return out


def cmd_list(args) -> int:
    if args.template:
        if args.template not in FAMILIES:
            print(f"unknown family {args.template!r}", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(to_toml(template(args.template)))
        return EXIT_PASS
    cat = catalog()
    if args.json:
        print(json.dumps(cat, indent=2))
        return EXIT_PASS
    for fid, e in cat.items():
        print(f"{fid}")
        print(f"  {e['summary']}")
        print(f"  anchor: {e['anchor']}")
        if e["blocks"]:
            print(f"  blocks: {', '.join(e['blocks'])}")
        for f in e["required"]:
            print(f"  required  {f['name']}: {f['constraint']}")
        for f in e["optional"]:
            print(f"  optional  {f['name']}: {f['constraint']} (default {f['default']})")
    return EXIT_PASS


def build_parser():
    ap = argparse.ArgumentParser(prog="ncmd", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (overrides ${ENV_OUT} and the config)")
    r.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    r.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="print the experiment catalog")
    ls.add_argument("--json", action="store_true", help="machine-readable catalog")
    ls.add_argument("--template", metavar="FAMILY", help="print a template config for FAMILY")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
