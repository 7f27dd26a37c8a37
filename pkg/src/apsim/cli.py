"""Command-line runner.

    apsim run CONFIG [--check] [--out DIR] [--threads N]
    apsim presets [--dump DIR]
    apsim validate CONFIG

``CONFIG`` is a JSON file or the name of a built-in preset. Exit codes:
0 success, 2 invalid config, 3 numerical failure, 4 acceptance check
failed under ``--check``.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
import time

from . import __version__
from .report import dumps, write_atomic
from .schema import ConfigError, validate_config

log = logging.getLogger("apsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

PRESET_DIR = os.path.join(os.path.dirname(__file__), "presets")


def list_presets():
    """``[(name, description)]`` for every built-in preset, sorted by name."""
    out = []
    for fn in sorted(os.listdir(PRESET_DIR)):
        if fn.endswith(".json"):
            with open(os.path.join(PRESET_DIR, fn)) as f:
                cfg = json.load(f)
            out.append((fn[:-5], cfg.get("description", "")))
    return out


def load_config(ref):
    """Read a config from a path, falling back to a preset name."""
    path = ref
    if not os.path.exists(path):
        cand = os.path.join(PRESET_DIR, ref + ".json")
        if os.path.exists(cand):
            path = cand
        else:
            raise ConfigError(f"no such config file or preset: {ref}")
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def execute(cfg, out_dir=None, threads=None, check=False):
    """Validate, run and write artifacts. Returns ``(exit_code, summary)``."""
    from .experiments import run_experiment
    from .lindblad import CPTPError
    from .protocol import CPViolation
    from .spectral import SpectralError
    validate_config(cfg)
    threads = threads or cfg.get("threads", 1)
    out_dir = out_dir or cfg.get("output") or os.path.join("out", cfg.get("name", cfg["kind"]))
    t0 = time.perf_counter()
    try:
        outcome = run_experiment(cfg, threads)
    except (CPViolation, CPTPError, SpectralError, RuntimeError, FloatingPointError,
            ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC, {"error": str(exc)}
    log.info("%s finished in %.1f s", cfg["kind"], time.perf_counter() - t0)
    checks_ok = all(c["passed"] for c in outcome.checks.values())
    summary = {
        "tool": "apsim", "version": __version__, "kind": cfg["kind"],
        "name": cfg.get("name", cfg["kind"]), "config_hash": config_hash(cfg),
        "seed": cfg.get("seed", 0), "results": outcome.results,
        "checks": outcome.checks, "checks_passed": bool(checks_ok),
        "numerical_failures": outcome.failures,
        "artifacts": sorted(outcome.files) + ["summary.json"],
    }
    for name, text in sorted(outcome.files.items()):
        write_atomic(os.path.join(out_dir, name), text)
    write_atomic(os.path.join(out_dir, "summary.json"), dumps(summary))
    if outcome.failures:
        return EXIT_NUMERIC, summary
    if check and not checks_ok:
        return EXIT_CHECK, summary
    return EXIT_OK, summary


def _print_checks(summary, stream):
    for name, c in summary.get("checks", {}).items():
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"{flag} {name}: value={c['value']} threshold={c['threshold']}", file=stream)


def cmd_run(args):
    try:
        cfg = load_config(args.config)
        code, summary = execute(cfg, args.out, args.threads, args.check)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # precondition failures raised by the numerical layer
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_checks(summary, sys.stdout)
    if code == EXIT_NUMERIC:
        print(f"numerical failure: {summary.get('error') or summary.get('numerical_failures')}",
              file=sys.stderr)
    return code


def cmd_presets(args):
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
        for name, _ in list_presets():
            with open(os.path.join(PRESET_DIR, name + ".json")) as f:
                write_atomic(os.path.join(args.dump, name + ".json"), f.read())
    for name, desc in list_presets():
        print(f"{name}\t{desc}")
    return EXIT_OK


def cmd_validate(args):
    try:
        validate_config(load_config(args.config))
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="apsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"apsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config or preset")
    r.add_argument("config")
    r.add_argument("--check", action="store_true", help="exit 4 if an acceptance check fails")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)
    ps = sub.add_parser("presets", help="list built-in presets")
    ps.add_argument("--dump", default=None, help="write the preset configs to DIR")
    ps.set_defaults(func=cmd_presets)
    v = sub.add_parser("validate", help="schema-check a config")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("invalid config: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
