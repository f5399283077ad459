"""Command-line driver: ``mkpls {synth,features,param,inspect-param,gram,eval}``.

Every subcommand accepts ``--config FILE.json``; keys mirror the long flag
names (dashes become underscores) and explicit flags win over the file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import argparse
import functools
import json
import logging
from pathlib import Path
import sys

from . import _accel
from .datasets import SynthConfig, export_dataset, load_manifest, synth_generate
from .errors import ConfigError, InputError, SolverError
from .features import LbpConfig
from .io import save_gram, write_matrix_csv
from .kernels import KINDS, KernelSpec, gram_matrix
from .manifold import BasisConfig
from .pipeline import (
    DEFAULT_M,
    ExperimentConfig,
    inspect_param,
    load_params_dir,
    parameterize,
    run_eval,
    save_params_dir,
    write_inspect_csv,
    write_report,
)

log = logging.getLogger("mkpls")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _csv_list(cast):
    def parse(text):
        return [cast(x) for x in str(text).split(",") if x.strip()]

    return parse


def _grid(text):
    try:
        r, c = str(text).lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 3x4, got {text!r}")


class Options:
    """Flag values layered over a JSON config over built-in defaults."""

    def __init__(self, args):
        self.args = args
        self.file = {}
        if getattr(args, "config", None):
            try:
                self.file = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(self.file, dict):
                raise ConfigError("config file must hold a JSON object")

    def get(self, name, default=None, cast=None):
        val = getattr(self.args, name, None)
        if val is None:
            val = self.file.get(name, default)
        if val is not None and cast is not None and not isinstance(val, (list, tuple)):
            val = cast(val)
        return val


def _as_config_error(fn):
    @functools.wraps(fn)
    def wrapped(*a, **kw):
        try:
            return fn(*a, **kw)
        except InputError as exc:
            raise ConfigError(str(exc)) from exc

    return wrapped


def _threads(opts):
    t = opts.get("threads")
    return int(t) if t else _accel.default_threads()


@_as_config_error
def _basis(opts):
    d = dict(opts.file.get("basis") or {})
    for key in ("n", "lam", "sigma"):
        v = getattr(opts.args, key, None)
        if v is not None:
            d[key] = v
    return BasisConfig(n=int(d.get("n", 8)), lam=float(d.get("lam", 50.0)), sigma=d.get("sigma"))


@_as_config_error
def _lbp(opts, required=False):
    d = dict(opts.file.get("lbp") or {})
    a = opts.args
    if getattr(a, "samples", None) is not None:
        d["samples"] = a.samples
    if getattr(a, "radii", None) is not None:
        d["radii"] = a.radii
    if getattr(a, "uniform", None) is not None:
        d["uniform"] = a.uniform
    if getattr(a, "grid", None) is not None:
        d["grid_rows"], d["grid_cols"] = a.grid
    if not d and not required:
        return None
    return LbpConfig(
        samples=int(d.get("samples", 8)),
        radii=tuple(d.get("radii", (1.0,))),
        uniform=bool(d.get("uniform", True)),
        grid_rows=int(d.get("grid_rows", 1)),
        grid_cols=int(d.get("grid_cols", 1)),
    )


@_as_config_error
def _synth(opts):
    d = dict(opts.file.get("synth") or {})
    for key in SynthConfig.__dataclass_fields__:
        v = getattr(opts.args, key, None)
        if v is not None:
            d[key] = v
    return SynthConfig.from_dict(d)


# -- subcommands -------------------------------------------------------------


def cmd_synth(opts):
    cfg = _synth(opts)
    out = opts.get("out")
    if not out:
        raise ConfigError("synth needs --out")
    units = synth_generate(cfg)
    manifest = export_dataset(units, out)
    (Path(out) / "synth.json").write_text(json.dumps(cfg.__dict__, indent=2))
    log.info("wrote %d units to %s", len(units), manifest)
    return EXIT_OK


def cmd_features(opts):
    manifest, out = opts.get("manifest"), opts.get("out")
    if not manifest or not out:
        raise ConfigError("features needs --manifest and --out")
    lbp = _lbp(opts, required=True)
    units = load_manifest(manifest, lbp)
    export_dataset(units, out)
    (Path(out) / "lbp.json").write_text(json.dumps(lbp.to_dict(), indent=2))
    log.info("extracted D=%d features for %d units", lbp.dim, len(units))
    return EXIT_OK


def cmd_param(opts):
    manifest, out = opts.get("manifest"), opts.get("out")
    if not manifest or not out:
        raise ConfigError("param needs --manifest and --out")
    basis = _basis(opts)
    units = load_manifest(manifest, _lbp(opts))
    items = parameterize(units, basis, diff=bool(opts.get("diff", False)), threads=_threads(opts))
    save_params_dir(items, out, basis)
    for it in items:
        log.debug("%s: C %s%s", it.id, it.C.shape, "" if it.C_diff is None else f", diff {it.C_diff.shape}")
    if items:
        log.info("parameterized %d units, C is %dx%d", len(items), *items[0].C.shape)
    return EXIT_OK


def cmd_inspect_param(opts):
    manifest, unit = opts.get("manifest"), opts.get("unit")
    if not manifest or not unit:
        raise ConfigError("inspect-param needs --manifest and --unit")
    lams = opts.get("lams", [0.01, 50.0], _csv_list(float))
    ns = opts.get("ns", [8, 16], _csv_list(int))
    units = {u.id: u for u in load_manifest(manifest, _lbp(opts))}
    if unit not in units:
        raise InputError(f"unit {unit!r} not in {manifest}")
    blocks = inspect_param(units[unit].features, lams, ns, opts.get("sigma"))
    out = opts.get("out")
    if out:
        with open(out, "w", newline="") as fh:
            write_inspect_csv(fh, blocks, unit)
    else:
        write_inspect_csv(sys.stdout, blocks, unit)
    return EXIT_OK


def cmd_gram(opts):
    params, out = opts.get("params"), opts.get("out")
    if not params or not out:
        raise ConfigError("gram needs --params and --out")
    kind = opts.get("kernel", "Euclid")
    spec = KernelSpec(kind=kind, omega=opts.get("omega"), a1=float(opts.get("a1", 0.5)), a2=float(opts.get("a2", 0.5)))
    items, _ = load_params_dir(params)
    if not items:
        raise InputError(f"{params}: no parameterizations")
    if kind == "GrassmDiff":
        if any(it.C_diff is None for it in items):
            raise ConfigError("GrassmDiff needs parameterizations written with `mkpls param --diff`")
        mats = [it.C_diff for it in items]
    else:
        mats = [it.C for it in items]
    gram = gram_matrix(mats, spec, threads=_threads(opts))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_gram(out.with_suffix(".bin"), gram)
    write_matrix_csv(out.with_suffix(".csv"), gram.K)
    (out.with_suffix(".ids")).write_text("\n".join(it.id for it in items) + "\n")
    log.info("Gram %s over %d items, omega=%s", kind, len(items), gram.omega)
    return EXIT_OK


def experiment_config(opts):
    use_synth = bool(opts.args.synth) or "synth" in opts.file
    if sum([bool(opts.get("manifest")), bool(opts.get("params")), use_synth]) != 1:
        raise ConfigError("eval needs exactly one of --manifest, --params or --synth")
    synth = _synth(opts) if use_synth else None
    return ExperimentConfig(
        manifest=opts.get("manifest"),
        synth=synth,
        params_dir=opts.get("params"),
        lbp=_lbp(opts),
        basis=_basis(opts),
        kernels=tuple(opts.get("kernels", ["Cosine", "Euclid", "EditDist", "Frechet"], _csv_list(str))),
        omega=opts.get("omega"),
        a1=float(opts.get("a1", 0.5)),
        a2=float(opts.get("a2", 0.5)),
        m=tuple(int(m) for m in opts.get("m", list(DEFAULT_M), _csv_list(int))),
        protocols=tuple(opts.get("protocols", ["ssd", "si", "spid"], _csv_list(str))),
        classifiers=tuple(opts.get("classifiers", ["rfc"], _csv_list(str))),
        knn_k=int(opts.get("knn_k", 1)),
        out=opts.get("out"),
        seed=opts.get("seed"),
        threads=_threads(opts),
    )


def cmd_eval(opts):
    cfg = experiment_config(opts)
    if not cfg.out:
        raise ConfigError("eval needs --out")
    table, run_log = run_eval(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.csv", table, cfg)
    (out / "log.json").write_text(json.dumps(run_log, indent=2, sort_keys=True))
    sys.stdout.write((out / "report.csv").read_text())
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "param": cmd_param,
    "inspect-param": cmd_inspect_param,
    "gram": cmd_gram,
    "eval": cmd_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mkpls", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults for any flag")
        p.add_argument("--threads", type=int, help="worker threads (default: $MKPLS_THREADS or CPU count)")
        return p

    def basis_flags(p):
        p.add_argument("--n", type=int, help="RBF basis count (default 8)")
        p.add_argument("--lam", type=float, help="regularizer lambda (default 50)")
        p.add_argument("--sigma", type=float, help="RBF width (default 2 n^2)")

    def lbp_flags(p):
        p.add_argument("--samples", type=int, help="LBP sampling points P")
        p.add_argument("--radii", type=_csv_list(float), help="comma-separated radii, e.g. 1,2,3,4")
        p.add_argument("--uniform", action=argparse.BooleanOptionalAction, default=None, help="u2 mapping")
        p.add_argument("--grid", type=_grid, help="cell grid, e.g. 3x4")

    p = common(sub.add_parser("synth", help="write a synthetic dataset"))
    p.add_argument("--out")
    p.add_argument("--classes", type=int)
    p.add_argument("--speakers", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--frames-min", dest="frames_min", type=int)
    p.add_argument("--frames-max", dest="frames_max", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--deformation", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("features", help="LBP features from PGM frame directories"))
    p.add_argument("--manifest")
    p.add_argument("--out")
    lbp_flags(p)

    p = common(sub.add_parser("param", help="fit per-unit parameterizations"))
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--diff", action="store_true", default=None, help="also fit difference parameterizations")
    basis_flags(p)
    lbp_flags(p)

    p = common(sub.add_parser("inspect-param", help="C-row traces over a lambda x n grid"))
    p.add_argument("--manifest")
    p.add_argument("--unit")
    p.add_argument("--lams", type=_csv_list(float))
    p.add_argument("--ns", type=_csv_list(int))
    p.add_argument("--sigma", type=float)
    p.add_argument("--out")
    lbp_flags(p)

    p = common(sub.add_parser("gram", help="Gram matrix over a parameterization directory"))
    p.add_argument("--params")
    p.add_argument("--kernel", choices=KINDS)
    p.add_argument("--omega", type=float)
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--out", help="output prefix; writes .bin, .csv and .ids")

    p = common(sub.add_parser("eval", help="protocol evaluation over kernels x m"))
    p.add_argument("--manifest")
    p.add_argument("--params", help="directory written by `mkpls param`")
    p.add_argument("--synth", action="store_true", default=None, help="generate a synthetic dataset")
    for key in ("classes", "speakers", "repetitions", "dim"):
        p.add_argument(f"--{key}", type=int)
    for key in ("separation", "deformation", "noise"):
        p.add_argument(f"--{key}", type=float)
    p.add_argument("--kernels", type=_csv_list(str))
    p.add_argument("--m", type=_csv_list(int), help="latent dimensions, e.g. 10,30,50")
    p.add_argument("--protocols", type=_csv_list(str), help="subset of ssd,si,spid")
    p.add_argument("--classifiers", type=_csv_list(str), help="subset of rfc,knn")
    p.add_argument("--knn-k", dest="knn_k", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    basis_flags(p)
    lbp_flags(p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](Options(args))
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except InputError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
