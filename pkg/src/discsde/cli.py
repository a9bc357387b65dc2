"""Command-line front end.

Reads an INI-style config (arrays as comma lists), applies flag overrides,
runs one experiment and writes CSV reports plus ``manifest.csv`` into the
output directory.  While a run is in progress its outputs carry a
``.partial`` suffix; they are renamed when the run succeeds.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__, experiments as ex
from .checks import geometry_suite, mu_g_continuity, transform_suite
from .errors import (CertificateError, DegenerateInput, DegenerateNoise, DiscSdeError,
                     GeometryError, GridMismatch, NoConvergence, OnSurface, ParseError,
                     ValidationError)
from .geometry import surface_from_config
from .kernels import default_backend
from .model import MODELS, _CUSTOM, build_model
from .transform import TransformSpec

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

EXPERIMENTS = ("error", "diff", "sup-error", "hist", "occupation", "check-transform",
               "check-geometry")
COMMANDS = {f"run-{e}": e for e in EXPERIMENTS[:5]}
COMMANDS.update({"check-transform": "check-transform", "check-geometry": "check-geometry"})

DEFAULT_N_LIST = [2**k for k in range(6, 13)]
DEFAULT_N = 2**14
DEFAULT_M = 5000
DEFAULT_P = [1.0, 2.0, 4.0, 8.0]
DEFAULT_EPS_LIST = [0.01, 0.05, 0.1, 0.2]


@dataclass
class RunConfig:
    experiment: str = "error"
    model: str = "example1"
    model_params: Dict[str, object] = field(default_factory=dict)
    scheme: str = "em"
    p_list: List[float] = field(default_factory=lambda: list(DEFAULT_P))
    n_list: List[int] = field(default_factory=lambda: list(DEFAULT_N_LIST))
    N: int = DEFAULT_N
    m: int = DEFAULT_M
    master_seed: int = 0
    threads: int = field(default_factory=ex.default_threads)
    out_dir: str = "out"
    exponent: float = 0.45
    eps_list: List[float] = field(default_factory=lambda: list(DEFAULT_EPS_LIST))
    eps: Optional[float] = None
    newton_tol: float = 1e-12
    fd_step: float = 1e-5
    samples: int = 10_000
    surface: Optional[Dict[str, object]] = None

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment '{self.experiment}'")
        if self.scheme not in ex.SCHEMES:
            raise ValidationError(f"scheme must be one of {ex.SCHEMES}")
        if self.model not in MODELS and self.model not in _CUSTOM:
            raise ValidationError(f"unknown model '{self.model}'")
        if not self.p_list or any(not p >= 1 for p in self.p_list):
            raise ValidationError("p must be >= 1")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ValidationError("n must be >= 1")
        if self.N < 1:
            raise ValidationError("N must be >= 1")
        if self.experiment in ("error", "sup-error", "occupation"):
            bad = [n for n in self.n_list if self.N % n]
            if bad:
                raise ValidationError(f"n must divide N (N={self.N}, offending n: {bad})")
        if self.m < 1:
            raise ValidationError("m must be >= 1")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.master_seed < 0 or self.master_seed >= 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.eps is not None and not self.eps > 0:
            raise ValidationError("eps must be positive")
        if any(not e >= 0 for e in self.eps_list):
            raise ValidationError("eps_list entries must be >= 0")
        return self


# --------------------------------------------------------------------------
# parsing


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _number_or_list(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 and "," not in text else vals


_RUN_KEYS = {
    "experiment": ("experiment", str),
    "model": ("model", str),
    "scheme": ("scheme", str),
    "p": ("p_list", _floats),
    "n": ("n_list", _ints),
    "N": ("N", int),
    "m": ("m", int),
    "seed": ("master_seed", int),
    "threads": ("threads", int),
    "out_dir": ("out_dir", str),
    "exponent": ("exponent", float),
    "eps_list": ("eps_list", _floats),
    "samples": ("samples", int),
}
_TRANSFORM_KEYS = {"eps": float, "newton_tol": float, "fd_step": float}


def _read_ini(path):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep "N" and "n" apart
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ParseError(f"{path}: config file not found") from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f" line {line}" if line else ""
        raise ParseError(f"{path}{where}: {exc.message.splitlines()[0]}") from None
    return parser


def _convert(path, section, key, raw, conv):
    try:
        return conv(raw.strip())
    except ValueError:
        raise ParseError(f"{path} [{section}] {key}: cannot parse {raw!r}") from None


def parse_config(path=None, overrides=None):
    """Build a validated :class:`RunConfig` from a file and flag overrides.

    ``overrides`` maps :class:`RunConfig` field names to values; ``None``
    values are ignored.  Overrides take precedence over the file.
    """
    cfg = RunConfig()
    if path is not None:
        ini = _read_ini(path)
        for section in ini.sections():
            items = ini[section]
            if section == "run":
                for key, raw in items.items():
                    if key not in _RUN_KEYS:
                        raise ParseError(f"{path} [run] {key}: unknown key")
                    name, conv = _RUN_KEYS[key]
                    setattr(cfg, name, _convert(path, section, key, raw, conv))
            elif section == "model":
                cfg.model_params = {k: _convert(path, section, k, v, _number_or_list)
                                    for k, v in items.items()}
            elif section == "transform":
                for key, raw in items.items():
                    if key not in _TRANSFORM_KEYS:
                        raise ParseError(f"{path} [transform] {key}: unknown key")
                    setattr(cfg, key, _convert(path, section, key, raw, _TRANSFORM_KEYS[key]))
            elif section == "surface":
                params = {}
                for key, raw in items.items():
                    params[key] = raw.strip() if key == "kind" else _convert(
                        path, section, key, raw, _floats)
                if "kind" not in params:
                    raise ParseError(f"{path} [surface]: missing key 'kind'")
                cfg.surface = params
            else:
                raise ParseError(f"{path}: unknown section [{section}]")
    for name, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


# --------------------------------------------------------------------------
# running


class _Outputs:
    """Files written during a run; kept as ``.partial`` until :meth:`commit`."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.names = []

    def path(self, name):
        self.names.append(name)
        return os.path.join(self.out_dir, name + ".partial")

    def commit(self):
        for name in self.names:
            os.replace(os.path.join(self.out_dir, name + ".partial"),
                       os.path.join(self.out_dir, name))


def _write_manifest(path, cfg, extra):
    rows = [("library", "discsde"), ("version", __version__), ("backend", default_backend())]
    for key, value in asdict(cfg).items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        rows.append((key, value))
    rows.extend(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "sampled_sup", "bound", "pass"])
        for r in rows:
            w.writerow([r.quantity, ex.fmt(r.sampled), ex.fmt(r.bound), str(r.passed).lower()])


def _transform(cfg, model):
    return TransformSpec(model, eps=cfg.eps, fd_step=cfg.fd_step, newton_tol=cfg.newton_tol,
                         cert_samples=cfg.samples, cert_seed=cfg.master_seed)


def _fits(table):
    fits = {}
    for p in table.p_values:
        try:
            fits[p] = table.fit(p)
        except DegenerateInput as exc:
            log.warning("p=%g: no rate fit (%s)", p, exc)
    return fits


def _run_experiment(cfg, out):
    """Dispatch; returns True when every reported check passed."""
    model = build_model(cfg.model, cfg.model_params)
    exp = cfg.experiment
    if exp == "error":
        spec = _transform(cfg, model) if cfg.scheme == "em-transformed" else None
        table = ex.empirical_error(model, cfg.scheme, cfg.p_list, cfg.n_list, cfg.N, cfg.m,
                                   cfg.master_seed, cfg.threads, transform=spec)
        ex.write_error_csv(out.path("error.csv"), table)
        ex.write_rates_csv(out.path("rates.csv"), _fits(table))
    elif exp == "diff":
        table = ex.empirical_diff(model, cfg.p_list, cfg.n_list, cfg.m, cfg.master_seed,
                                  cfg.threads)
        ex.write_error_csv(out.path("diff.csv"), table)
        ex.write_rates_csv(out.path("rates.csv"), _fits(table))
    elif exp == "sup-error":
        table = ex.empirical_sup_error(model, cfg.p_list, cfg.n_list, cfg.N, cfg.m,
                                       cfg.master_seed, cfg.threads)
        ex.write_error_csv(out.path("sup_error.csv"), table)
        ex.write_rates_csv(out.path("rates.csv"), _fits(table))
    elif exp == "hist":
        reports = [ex.scaled_diff_histogram(model, p, cfg.n_list, cfg.m, cfg.exponent,
                                            cfg.master_seed, cfg.threads) for p in cfg.p_list]
        ex.write_hist_csv(out.path("hist.csv"), reports)
    elif exp == "occupation":
        means, nb = ex.occupation_means(model, cfg.n_list, cfg.m, cfg.master_seed, cfg.N,
                                        cfg.eps_list, cfg.threads)
        ex.write_occupation_csv(out.path("occupation.csv"), cfg.n_list, cfg.m, means)
        if cfg.eps_list:
            ex.write_neighborhood_csv(out.path("neighborhood.csv"), cfg.eps_list, cfg.n_list,
                                      cfg.m, nb)
        if not np.any(means > 0):
            raise DegenerateInput("occupation means are identically zero")
        ex.write_rates_csv(out.path("rates.csv"), {1.0: ex.fit_rate(cfg.n_list, means)})
    elif exp == "check-transform":
        path = out.path("transform.csv")
        try:
            spec = _transform(cfg, model)
        except CertificateError as exc:
            _write_rows(path, exc.report)
            raise
        row, _, _ = mu_g_continuity(spec, 100, cfg.master_seed)
        rows = spec.report + transform_suite(spec, cfg.samples, cfg.master_seed) + [row]
        _write_rows(path, rows)
        return all(r.passed for r in rows)
    elif exp == "check-geometry":
        if cfg.surface is not None:
            params = dict(cfg.surface)
            surface = surface_from_config(params.pop("kind"), params)
        else:
            surface = model.surface
        rows = geometry_suite(surface, cfg.samples, cfg.master_seed)
        _write_rows(out.path("geometry.csv"), rows)
        return all(r.passed for r in rows)
    return True


_NUMERICAL = (CertificateError, NoConvergence, DegenerateInput, DegenerateNoise, OnSurface,
              GeometryError)


def run(cfg):
    """Run a validated config; returns the process exit code."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = os.path.join(cfg.out_dir, "manifest.csv")
    _write_manifest(manifest, cfg, [("status", "running")])
    out = _Outputs(cfg.out_dir)
    start = time.perf_counter()
    code, status = EXIT_OK, "ok"
    try:
        if not _run_experiment(cfg, out):
            code, status = EXIT_NUMERICAL, "failed checks"
            print("error: one or more checks failed; see the report", file=sys.stderr)
    except (ValidationError, GridMismatch) as exc:
        code, status = EXIT_INVALID, f"invalid: {exc}"
        print(f"error: {exc}", file=sys.stderr)
    except _NUMERICAL as exc:
        code, status = EXIT_NUMERICAL, f"numerical failure: {exc}"
        print(f"error: {cfg.experiment} on {cfg.model}: {exc}", file=sys.stderr)
    if code == EXIT_OK:
        out.commit()
    wall = time.perf_counter() - start
    _write_manifest(manifest, cfg, [("status", status), ("wall_time_s", f"{wall:.3f}")])
    return code


# --------------------------------------------------------------------------
# argument parsing


def _flag_list(conv):
    def parse(text):
        try:
            return conv(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse list {text!r}") from None
    return parse


def _seed(text):
    value = int(text)
    if value < 0 or value >= 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="discsde", description="Euler-Maruyama experiments for SDEs with discontinuous drift")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["list-models"]:
        p = sub.add_parser(name)
        if name == "list-models":
            continue
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--model", metavar="NAME")
        p.add_argument("--seed", type=_seed, metavar="U64")
        p.add_argument("--threads", type=int, metavar="K")
        p.add_argument("--out-dir", metavar="PATH")
        p.add_argument("--n", type=_flag_list(_ints), metavar="LIST")
        p.add_argument("--N", dest="N", type=int, metavar="INT")
        p.add_argument("--m", type=int, metavar="INT")
        p.add_argument("--p", type=_flag_list(_floats), metavar="LIST")
        if name == "run-occupation":
            p.add_argument("--eps", dest="eps_list", type=_flag_list(_floats), metavar="LIST")
        else:
            p.add_argument("--eps", type=float, metavar="REAL")
        if name == "run-error":
            p.add_argument("--scheme", choices=ex.SCHEMES)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-models":
        for name, factory in sorted({**MODELS, **_CUSTOM}.items()):
            doc = (factory.__doc__ or "").strip().splitlines()
            print(f"{name}\t{doc[0] if doc else ''}")
        return EXIT_OK
    overrides = {
        "experiment": COMMANDS[args.command],
        "model": args.model,
        "master_seed": args.seed,
        "threads": args.threads,
        "out_dir": args.out_dir,
        "n_list": args.n,
        "N": args.N,
        "m": args.m,
        "p_list": args.p,
        "eps": getattr(args, "eps", None),
        "eps_list": getattr(args, "eps_list", None),
        "scheme": getattr(args, "scheme", None),
    }
    try:
        cfg = parse_config(args.config, overrides)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg)
    except DiscSdeError as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
