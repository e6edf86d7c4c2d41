"""Command line: ``kswgd run|validate|presets``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
Errors are printed to stderr as one JSON object with a ``category`` field.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PRESET_NAMES, describe_schema, preset_defaults, validate_config
from .errors import ConfigError, ContractError, KSWGDError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _report(category, message, code, **extra):
    payload = {"category": category, "message": message, "exit_code": code}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)
    return code


def _add_common(p):
    p.add_argument("config", help="YAML config or a manifest.json from an earlier run")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set sampler.h=0.5 (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="master seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="kswgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write its artifacts")
    _add_common(run)
    run.add_argument("--out", default=None, help="output directory (default runs/<preset>)")
    val = sub.add_parser("validate", help="check a config and print the resolved version")
    _add_common(val)
    pre = sub.add_parser("presets", help="list presets, or show one preset's defaults")
    pre.add_argument("name", nargs="?", default=None)
    pre.add_argument("--schema", action="store_true", help="also list every config key")
    return parser


def _load(args, out=None):
    return validate_config(args.config, args.overrides, args.seed, out)


def cmd_validate(args):
    cfg = _load(args)
    print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_OK


def cmd_run(args):
    from .experiments import run_experiment

    cfg = _load(args, args.out)
    out = cfg.get("output.dir") or f"runs/{cfg.preset}"
    result = run_experiment(cfg, out)
    print(json.dumps({"preset": cfg.preset, "output": out, "summary": result.summary},
                     indent=2, default=float))
    return EXIT_OK


def cmd_presets(args):
    if args.name is None:
        for name in PRESET_NAMES:
            print(name)
    else:
        if args.name not in PRESET_NAMES:
            from .config import suggest_preset

            raise ConfigError(f"unknown preset {args.name!r}",
                              [f"preset: unknown preset {args.name!r} "
                               f"(did you mean {suggest_preset(args.name)!r}?)"])
        print(json.dumps(preset_defaults(args.name), indent=2))
    if args.schema:
        for path, desc in describe_schema():
            print(f"{path}\t{desc}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "presets": cmd_presets}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        return _report(exc.category, str(exc), EXIT_CONFIG, errors=exc.errors)
    except NumericalError as exc:
        return _report(exc.category, str(exc), EXIT_NUMERICAL,
                       module=_origin(exc), details=_safe(exc.details))
    except ContractError as exc:
        return _report(exc.category, str(exc), EXIT_CONFIG,
                       module=_origin(exc))
    except KSWGDError as exc:
        return _report(exc.category, str(exc), EXIT_NUMERICAL)
    except OSError as exc:
        return _report("io", str(exc), EXIT_IO)


def _origin(exc):
    """Name of the package module where the exception was raised."""
    tb, name = exc.__traceback__, None
    while tb is not None:
        fname = tb.tb_frame.f_code.co_filename
        if "kswgd" in fname:
            name = Path(fname).stem
        tb = tb.tb_next
    return name


def _safe(details):
    return {k: (v if isinstance(v, (int, float, str, type(None))) else repr(v)) for k, v in details.items()}


if __name__ == "__main__":
    sys.exit(main())
