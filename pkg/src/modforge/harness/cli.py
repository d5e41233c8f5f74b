"""``modforge`` command line: generate, run, compare, plot.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O error.
"""
import argparse
import json
import logging
import os
import sys

import yaml

from .. import data
from ..errors import ConfigError, FormatError, ModforgeError
from . import compare as compare_mod
from . import config as config_mod
from . import plot as plot_mod
from . import runner

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_spec(ref, seed=None):
    if ref.startswith("builtin:"):
        return data.benchmark(ref[len("builtin:"):], 0 if seed is None else seed)
    with open(ref, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"spec file is not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("spec file must hold a mapping")
    if seed is not None:
        raw = {**raw, "seed": seed}
    try:
        return data.SyntheticSpec.from_dict(raw)
    except KeyError as exc:
        raise ConfigError(f"spec key {exc.args[0]!r} is required") from None
    except TypeError as exc:
        raise ConfigError(f"spec has an invalid value: {exc}") from None


def cmd_generate(args):
    spec = _load_spec(args.spec, args.seed)
    ds = data.generate(spec)
    data.save(ds, args.out)
    print(f"wrote {args.out}: {ds.summary()}")


def cmd_run(args):
    cfg = config_mod.load(args.config)
    if args.probe_every is not None and args.probe_every < 0:
        raise ConfigError("--probe-every must be >= 0")
    manifest = runner.run_experiment(cfg, args.probe_every)
    agg = manifest["aggregate"]
    print(f"{cfg.method.value}/{cfg.model.fusion}: acc {agg['acc']['mean']:.4f}±{agg['acc']['std']:.4f} "
          f"over {len(cfg.seeds)} seed(s); manifest at {os.path.join(cfg.output_dir, 'manifest.json')}")


def cmd_compare(args):
    manifests = [compare_mod.load_manifest(p) for p in args.runs]
    text = compare_mod.render(manifests)
    _write_text(args.out, text)
    print(text, end="")


def cmd_plot(args):
    _write_text(args.out, plot_mod.render(args.run))
    print(f"wrote {args.out}")


def build_parser():
    p = _Parser(prog="modforge", description="Multi-modal training experiments: generate, run, compare, plot.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset as .mmds")
    g.add_argument("--spec", required=True, help="spec file (YAML/JSON) or builtin:<name>")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None, help="generator seed (overrides the spec's)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="train concepts and a model per seed, probe, write CSVs and a manifest")
    r.add_argument("--config", required=True)
    r.add_argument("--probe-every", type=int, default=None, help="probe d_m every N epochs (0 = final only)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate manifests")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", help="SVG of per-epoch accuracy and d_m")
    pl.add_argument("--run", required=True, help="per-seed CSV written by run")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except (ConfigError, FormatError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModforgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
