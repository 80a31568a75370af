"""Command-line interface.

Settings resolve as: command-line flags, then the ``--config`` file (flat
JSON or TOML; a run manifest also works), then built-in defaults.
Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 selftest
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import ConfigurationError, InvalidParameterError, SdeSimError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3

log = logging.getLogger("sdesim")

COMMON_DEFAULTS = {"seed": 42, "threads": None, "out": ".", "format": "csv"}

DEFAULTS = {
    "simulate": {"model": "heston", "scheme": None, "P": 1, "t0": 0.0, "T": 1.0, "M": 8,
                 "n_steps": None, "y0": None, "area_sampler": "none", "area_q": None,
                 "ode_substeps": 2, "params": {}},
    "converge": {"model": "gbm", "scheme": "em", "P": 1000, "t0": 0.0, "T": 1.0, "M": 9,
                 "Mstart": 4, "y0": None, "area_sampler": "none", "area_q": None,
                 "ode_substeps": 2, "reference": "auto", "reference_extra": 0, "params": {}},
    "weak-strong": {"a": 3.0, "b": 1.4, "y0": 1.0, "T": 1.0, "h": 0.05, "P": 10},
    "levy-test": {"sampler": "kl", "h": 0.1, "q": None, "samples": 100000,
                  "dw1": None, "dw2": None},
    "fk-check": {"model": "langevin", "f": "id", "t": 1.0, "y0": 1.0, "grid": 401,
                 "paths": 100000, "steps": 256, "params": {}},
    "selftest": {},
}


class UsageError(SdeSimError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _q(text):
    return None if text == "auto" else int(text)


def _count(text):
    return int(float(text))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="base seed (default 42)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--config", help="JSON or TOML settings file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="sdesim", description="Strong and weak SDE simulation.",
                parents=[common], argument_default=argparse.SUPPRESS)
    p.add_argument("--version", action="version", version=f"sdesim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--model", choices=("langevin", "gbm", "heston", "linear2d"))
        sp.add_argument("--param", dest="param_list", action="append", type=_kv,
                        metavar="KEY=VALUE", help="model parameter, repeatable")

    def scheme_flags(sp):
        sp.add_argument("--scheme",
                        choices=("em", "milstein", "cg_half", "cg_one", "heston_ft"))
        sp.add_argument("--ode-substeps", dest="ode_substeps", type=int)
        sp.add_argument("--area-sampler", dest="area_sampler",
                        choices=("none", "kl", "rw", "cond"))
        sp.add_argument("--area-q", dest="area_q", type=_q, help="integer or auto")

    s = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS,
                       help="write per-path trajectories")
    model_flags(s)
    scheme_flags(s)
    s.add_argument("--P", "--paths", dest="P", type=_count)
    s.add_argument("--T", type=float)
    s.add_argument("--t0", type=float)
    s.add_argument("--M", type=int, help="2^M steps unless --n-steps is given")
    s.add_argument("--n-steps", dest="n_steps", type=int)
    s.add_argument("--y0", type=float, nargs="+")

    c = sub.add_parser("converge", parents=[common], argument_default=argparse.SUPPRESS,
                       help="matched-path strong error study")
    model_flags(c)
    scheme_flags(c)
    c.add_argument("--P", "--paths", dest="P", type=_count)
    c.add_argument("--T", type=float)
    c.add_argument("--t0", type=float)
    c.add_argument("--M", type=int)
    c.add_argument("--Mstart", type=int)
    c.add_argument("--y0", type=float, nargs="+")
    c.add_argument("--reference", help="auto, exact, finest or a scheme name")
    c.add_argument("--reference-extra", dest="reference_extra", type=int)

    w = sub.add_parser("weak-strong", parents=[common], argument_default=argparse.SUPPRESS,
                       help="binomial vs Gaussian Euler-Maruyama on GBM")
    for name in ("a", "b", "y0", "T", "h"):
        w.add_argument(f"--{name}", type=float)
    w.add_argument("--P", "--paths", dest="P", type=_count)

    lv = sub.add_parser("levy-test", parents=[common], argument_default=argparse.SUPPRESS,
                        help="Levy area sampler against the Fourier oracle")
    lv.add_argument("--sampler", choices=("kl", "rw", "cond"))
    lv.add_argument("--h", type=float)
    lv.add_argument("--q", type=_q)
    lv.add_argument("--samples", type=_count)
    lv.add_argument("--dw1", type=float)
    lv.add_argument("--dw2", type=float)

    fk = sub.add_parser("fk-check", parents=[common], argument_default=argparse.SUPPRESS,
                        help="Feynman-Kac PDE vs Monte Carlo")
    fk.add_argument("--model", choices=("langevin", "gbm"))
    fk.add_argument("--param", dest="param_list", action="append", type=_kv, metavar="KEY=VALUE")
    fk.add_argument("--f", choices=("id", "square", "exp"))
    fk.add_argument("--t", type=float)
    fk.add_argument("--y0", type=float)
    fk.add_argument("--grid", type=int)
    fk.add_argument("--paths", type=_count)
    fk.add_argument("--steps", type=int, help="Euler-Maruyama steps for the MC side")

    sub.add_parser("selftest", parents=[common], argument_default=argparse.SUPPRESS,
                   help="word identities and quick numerical checks")
    return p


# -- config resolution ---------------------------------------------------------------

def load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text.decode())
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a key-value table")
    if "settings" in data and isinstance(data["settings"], dict):
        data = data["settings"]
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    settings = dict(COMMON_DEFAULTS)
    settings.update(DEFAULTS[cmd])
    cli = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    if getattr(args, "config", None):
        fileconf = load_config_file(args.config)
        fileconf.pop("command", None)
        unknown = set(fileconf) - set(settings)
        if unknown:
            raise ConfigurationError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        settings.update(fileconf)
    plist = cli.pop("param_list", None)
    settings.update(cli)
    if plist:
        settings["params"] = {**settings.get("params", {}), **dict(plist)}
    if settings["threads"] is None:
        settings["threads"] = os.cpu_count() or 1
    return settings


# -- output helpers ----------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows, footer=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        if footer:
            w.writerow(footer[0])
            w.writerow([_fmt(x) for x in footer[1]])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out, cmd, settings, outputs):
    exclude = {"threads", "out"}
    manifest = {
        "command": cmd,
        "settings": {k: v for k, v in settings.items() if k not in exclude},
        "backend": BACKEND,
        "version": __version__,
        "outputs": outputs,
    }
    write_json(out / f"manifest_{cmd}.json", manifest)


def _outdir(settings):
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------------------

def _sampler(settings):
    from .levy import AreaSampler
    return AreaSampler(settings.get("area_sampler") or "none", settings.get("area_q"))


def _ensemble(settings, **over):
    from .mc import EnsembleConfig
    from .model import make_model
    model = make_model(settings["model"], **(settings.get("params") or {}))
    scheme = settings.get("scheme") or ("heston_ft" if settings["model"] == "heston" else "em")
    kw = dict(model=model, scheme=scheme, P=int(settings["P"]), seed=int(settings["seed"]),
              t0=float(settings["t0"]), T=float(settings["T"]), M=int(settings["M"]),
              y0=tuple(settings["y0"]) if settings.get("y0") is not None else None,
              sampler=_sampler(settings), ode_substeps=int(settings["ode_substeps"]),
              threads=int(settings["threads"]))
    kw.update(over)
    return EnsembleConfig(**kw)


def cmd_simulate(settings):
    if int(settings["P"]) < 1:
        raise InvalidParameterError("P must be >= 1")
    from .mc import simulate_ensemble
    cfg = _ensemble(settings, Mstart=0, n_steps=settings.get("n_steps"))
    res = simulate_ensemble(cfg, keep_path=True)
    out = _outdir(settings)
    header = ["t"] + list(res.labels)
    outputs = []
    if settings["format"] == "json":
        name = "trajectories.json"
        write_json(out / name, {"t": res.times, "labels": res.labels, "paths": res.states})
        outputs.append(name)
    else:
        width = max(5, len(str(cfg.P - 1)))
        for p in range(cfg.P):
            name = f"path_{p:0{width}d}.csv"
            write_csv(out / name, header, ([t, *s] for t, s in zip(res.times, res.states[p])))
            outputs.append(name)
    write_manifest(out, "simulate", settings, outputs)
    print(f"wrote {len(outputs)} file(s) to {out}; non-finite paths: {res.n_excluded}")
    return EXIT_OK


def cmd_converge(settings):
    from .mc import strong_error_study
    cfg = _ensemble(settings, Mstart=int(settings["Mstart"]),
                    reference=settings["reference"],
                    reference_extra=int(settings["reference_extra"]))
    rep = strong_error_study(cfg)
    out = _outdir(settings)
    if settings["format"] == "json":
        name = "converge.json"
        write_json(out / name, {"level": list(range(1, rep.h.size + 1)), "h": rep.h,
                                "rms_error": rep.rms, "stderr": rep.stderr,
                                "cpu_seconds": rep.cpu, "slope": rep.fit.slope,
                                "intercept": rep.fit.intercept, "residual": rep.fit.residual,
                                "reference": rep.reference, "paths_used": rep.n_used,
                                "paths_excluded": rep.n_excluded})
    else:
        name = "converge.csv"
        write_csv(out / name, ["level", "h", "rms_error", "stderr", "cpu_seconds"], rep.rows(),
                  footer=(["slope", "intercept", "residual"], list(rep.fit)))
    write_manifest(out, "converge", settings, [name])
    for row in rep.rows():
        print("level {} h={:.6g} rms={:.6g} se={:.3g} cpu={:.3g}s".format(*row))
    print(f"slope={rep.fit.slope:.4f} intercept={rep.fit.intercept:.4f} "
          f"reference={rep.reference} excluded={rep.n_excluded}")
    return EXIT_OK


def cmd_weak_strong(settings):
    from .mc import EnsembleConfig, weak_vs_strong_study
    from .model import make_gbm
    h, T = float(settings["h"]), float(settings["T"])
    N = round(T / h)
    if N < 1 or not math.isclose(N * h, T, rel_tol=1e-9):
        raise InvalidParameterError("T/h must be a positive integer")
    cfg = EnsembleConfig(make_gbm(float(settings["a"]), float(settings["b"])), "em",
                         P=int(settings["P"]), seed=int(settings["seed"]), T=T, n_steps=N,
                         y0=(float(settings["y0"]),), threads=int(settings["threads"]), M=0,
                         Mstart=0)
    rep = weak_vs_strong_study(cfg)
    out = _outdir(settings)
    header = ["t", "mean_binomial", "mean_gaussian", "analytic"]
    rows = list(zip(rep.times, rep.mean_binomial, rep.mean_gaussian, rep.analytic))
    if settings["format"] == "json":
        name = "weak_strong.json"
        write_json(out / name, dict(zip(header, map(list, zip(*rows)))))
    else:
        name = "weak_strong.csv"
        write_csv(out / name, header, rows)
    write_manifest(out, "weak-strong", settings, [name])
    print(f"T={rep.times[-1]:g}: binomial {rep.mean_binomial[-1]:.6g}, "
          f"gaussian {rep.mean_gaussian[-1]:.6g}, analytic {rep.analytic[-1]:.6g}")
    return EXIT_OK


def levy_test(sampler, h, q, n, seed, dw1=None, dw2=None):
    """Samples plus ``{mean, variance, oracle_variance, ks}`` for one sampler."""
    from . import levy
    ids = np.arange(n)
    if sampler == "cond":
        Q = levy.SamplerBudget(q).resolve("cond", h)
        d1, d2, jhat, sub = levy.conditional_samples(seed, ids, h, Q)
        A = levy.conditional_area_form(d1, d2, jhat)
        ks = levy.ks_distance(levy.conditional_pit(A, d1, d2, h), levy.uniform_cdf)
        ov = h * h / 4.0
    else:
        dw1 = math.sqrt(h) if dw1 is None else dw1
        dw2 = math.sqrt(h) if dw2 is None else dw2
        ctx = levy.LevyContext(h, dw1, dw2)
        fn = levy.kl_samples if sampler == "kl" else levy.rw_samples
        A = fn(seed, ids, np.full(n, dw1), np.full(n, dw2), h, Q=q)[:, 0]
        ks = levy.ks_distance(A, levy.AreaCdf(ctx))
        ov = levy.area_variance(ctx)
    stats = {"mean": float(np.mean(A)), "variance": float(np.var(A, ddof=1)),
             "oracle_variance": ov, "ks": ks}
    return A, stats


def cmd_levy_test(settings):
    h = float(settings["h"])
    if not h > 0:
        raise InvalidParameterError("h must be positive")
    n = int(settings["samples"])
    if n < 2:
        raise InvalidParameterError("samples must be >= 2")
    A, stats = levy_test(settings["sampler"], h, settings.get("q"), n, int(settings["seed"]),
                         settings.get("dw1"), settings.get("dw2"))
    out = _outdir(settings)
    if settings["format"] == "json":
        names = ["levy_test.json"]
        write_json(out / names[0], {"samples": A, "stats": stats})
    else:
        names = ["levy_samples.csv", "levy_stats.csv"]
        write_csv(out / names[0], ["area"], ([a] for a in A))
        write_csv(out / names[1], list(stats), [list(stats.values())])
    write_manifest(out, "levy-test", settings, names)
    print(" ".join(f"{k}={v:.6g}" for k, v in stats.items()))
    return EXIT_OK


def _fk_setup(settings):
    from .fk import PAYOFFS
    from .model import make_model
    params = settings.get("params") or {}
    name = settings["model"]
    model = make_model(name, **params)
    a, b = model.params["a"], model.params["b"]
    t, y0, fname = float(settings["t"]), float(settings["y0"]), settings["f"]
    if name == "langevin":
        mean = y0 * math.exp(-a * t)
        sd = math.sqrt(b / (2 * a) * (1 - math.exp(-2 * a * t))) if a else math.sqrt(b * t)
        exact = {"id": mean, "square": mean ** 2 + sd ** 2,
                 "exp": math.exp(mean + 0.5 * sd ** 2)}[fname]
    else:
        mean = y0 * math.exp(a * t)
        sd = abs(mean) * math.sqrt(math.expm1(b * b * t))
        exact = {"id": mean, "square": y0 ** 2 * math.exp((2 * a + b * b) * t), "exp": None}[fname]
    return model, PAYOFFS[fname], t, y0, mean, sd, exact


def cmd_fk_check(settings):
    from .fk import FkProblem, auto_domain, cross_validate
    from .mc import EnsembleConfig
    model, f, t, y0, mean, sd, exact = _fk_setup(settings)
    lo, hi = auto_domain(mean, sd, y0)
    prob = FkProblem(model, f, t, lo, hi, n_y=int(settings["grid"]))
    cfg = EnsembleConfig(model, "em", P=int(settings["paths"]), seed=int(settings["seed"]),
                         T=t, n_steps=int(settings["steps"]), threads=int(settings["threads"]),
                         M=0, Mstart=0)
    rep = cross_validate(prob, cfg, y0, exact)
    out = _outdir(settings)
    name = "fk_check.json" if settings["format"] == "json" else "fk_check.csv"
    if settings["format"] == "json":
        write_json(out / name, {"rows": rep.rows(), "difference": rep.difference,
                                "tolerance": rep.tolerance, "passed": rep.passed})
    else:
        write_csv(out / name, ["source", "value", "error"], rep.rows())
    write_manifest(out, "fk-check", settings, [name])
    print(f"{'PASS' if rep.passed else 'FAIL'} fk-check: pde={rep.pde:.6g} mc={rep.mc_mean:.6g} "
          f"+- {rep.mc_stderr:.2g} |diff|={rep.difference:.3g} tol={rep.tolerance:.3g}"
          + (f" exact={exact:.6g}" if exact is not None else ""))
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def selftest_checks():
    """``(name, passed)`` for the word identities and a few cheap numeric checks."""
    from . import algebra, levy, rng
    checks = list(algebra.identity_suite())
    x, _ = rng.polar_transform(0.6, 0.0)
    checks.append(("polar transform (0.6, 0)", math.isclose(x, 0.6 * math.sqrt(-2 * math.log(0.36) / 0.36))))
    checks.append(("Box-Muller (e^-1/2, 0)", np.allclose(rng.box_muller_transform(math.exp(-0.5), 0.0), (1, 0))))
    checks.append(("char function at 0", levy.char_function(levy.LevyContext(1, 1, 0), 0.0) == 1.0))
    checks.append(("E J_11 = h/2", algebra.expected_stratonovich("11", 0.05) == 0.025))
    ji, jj = levy.j_pair_from_area(0.2, 0.4, 0.0)
    checks.append(("J_ij + J_ji = dWi dWj", math.isclose(ji + jj, 0.08)))
    return checks


def cmd_selftest(settings):
    checks = selftest_checks()
    out = _outdir(settings)
    name = "selftest.json" if settings["format"] == "json" else "selftest.csv"
    if settings["format"] == "json":
        write_json(out / name, {n: bool(p) for n, p in checks})
    else:
        write_csv(out / name, ["check", "passed"], ([n, int(p)] for n, p in checks))
    failed = [n for n, p in checks if not p]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    for n in failed:
        print(f"FAIL {n}")
    return EXIT_SELFTEST if failed else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "weak-strong": cmd_weak_strong,
    "levy-test": cmd_levy_test,
    "fk-check": cmd_fk_check,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = resolve(args)
        return COMMANDS[args.command](settings)
    except (UsageError, InvalidParameterError, ConfigurationError) as exc:
        print(f"sdesim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"sdesim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc, (FileNotFoundError, json.JSONDecodeError)) else EXIT_RUNTIME
    except (SdeSimError, ArithmeticError) as exc:
        print(f"sdesim: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
