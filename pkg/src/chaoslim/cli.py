"""Command-line entry point.

Subcommands: simulate | covariance | clt | nclt | moments | hermite |
levycheck | report.  Every table-producing run writes CSVs with the fully
resolved configuration in '#' header lines plus a machine-readable JSON
summary; the exit code is 0 exactly when every verdict row passes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .harness import (
    ExperimentSpec,
    ResultTable,
    run_experiment,
    write_csv,
)
from .levy import (
    DivergentMomentError,
    FiniteLevyMeasure,
    discretize,
    moment as levy_moment,
    parse_levy_model,
    pareto_tail_inverse,
)
from .limits import (
    RosenblattGenerator,
    fbm_paths,
    gaussian_joint_moment,
    hermite_joint_moment,
    hurst,
)
from .multilinear import Normalization, build_frame, partial_sums, x_sequence
from .renewal import make_return_law
from .streams import stream

_DEFAULT_LADDER = (2**10, 2**12, 2**14, 2**16)


def _common_flags(sp, reps_default=2000):
    sp.add_argument("--config", help="plain-text key=value file; flags override it")
    sp.add_argument("--seed", type=int, default=None, help="master 64-bit seed")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: min(8, cpu count))")
    sp.add_argument("--levy", default=None,
                    help="rademacher | pareto:ALPHA | discretized:ALPHA:EPS")
    sp.add_argument("--representation", default=None, choices=("cp", "series"),
                    help="compound-Poisson or series frame")
    sp.add_argument("--theta", type=float, default=None, help="integrand scale")
    sp.add_argument("--reps", type=int, default=None,
                    help=f"replications (default {reps_default})")
    sp.add_argument("--tolerance-scale", type=float, default=None,
                    help="multiply every verdict tolerance (testing hook)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="chaoslim",
        description=("Monte Carlo and exact-oracle checks for partial-sum limit "
                     "theorems of multilinear renewal-driven sequences. The "
                     "central limit regime requires p(beta-1) < -1; the "
                     "non-central regime requires p(beta-1) in (-1,0) with "
                     "p = 1 or 2 (fractional Brownian motion / second-order "
                     "limit)."))
    ap.add_argument("--version", action="version", version=f"chaoslim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("covariance", help="MC covariance vs the exact renewal oracle")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--lags", default="0,1,4,16,64")
    _common_flags(sp, reps_default=10**4)

    sp = sub.add_parser("clt", help="central limit checks (needs p(beta-1) < -1)")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--n", type=int, default=2**16)
    sp.add_argument("--lags", default="")
    sp.add_argument("--sigma2-tol", type=float, default=1e-4)
    _common_flags(sp)

    sp = sub.add_parser("nclt", help="non-central checks (needs p(beta-1) in (-1,0))")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--ladder", default=",".join(str(v) for v in _DEFAULT_LADDER))
    sp.add_argument("--lags", default="")
    sp.add_argument("--convention", default="variance-matched",
                    choices=("variance-matched", "factorial-inside"))
    sp.add_argument("--exploratory", action="store_true",
                    help="allow p >= 3 (moment comparison only, no limit claim)")
    _common_flags(sp)

    sp = sub.add_parser("moments", help="limit joint-moment formula values as CSV")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--r", type=int, required=True)
    sp.add_argument("--t", default=None, help="comma list of times, default 1,..,1")
    sp.add_argument("--mu-f", type=float, default=1.0)
    sp.add_argument("--gaussian-sigma2", type=float, default=None,
                    help="also print the Gaussian pairing moment at this sigma2")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None)

    sp = sub.add_parser("hermite", help="sample limit-process paths/values")
    sp.add_argument("--kind", choices=("fbm", "rosenblatt"), required=True)
    sp.add_argument("--hurst", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--n", type=int, default=512, help="fbm grid points")
    sp.add_argument("--cells", type=int, default=2000, help="rosenblatt spatial cells")
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--paths", type=int, default=100)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None)

    sp = sub.add_parser("levycheck", help="moment identities and discretization contract")
    sp.add_argument("--model", default="rademacher")
    sp.add_argument("--orders", default="2,3,4")
    sp.add_argument("--eps", default="0.1,0.05,0.02")
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None)

    sp = sub.add_parser("simulate", help="emit one replication's X-sequence and sums")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--norm", default=None, choices=("sqrtn", "an", "prop"))
    sp.add_argument("--tgrid", default="0,0.25,0.5,0.75,1")
    _common_flags(sp, reps_default=1)

    sp = sub.add_parser("report", help="render figures from run CSVs")
    sp.add_argument("--dir", default=None, help="run directory; renders every kind")
    sp.add_argument("--in", dest="inputs", nargs="+", default=None)
    sp.add_argument("--kind", default=None,
                    choices=("covariance-loglog", "qq", "scaling", "moments-bars"))
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None)
    return ap


# -- config file merging -------------------------------------------------------


def _load_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = line.split("=", 1)
                out[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise SystemExit(f"cannot read config file {path}: {exc}")
    return out


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; unknown file keys rejected."""
    cfg = dict(defaults)
    file_vals = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, raw in file_vals.items():
        if key not in cfg:
            raise SystemExit(f"unknown config key: {key}")
        ref = cfg[key]
        if isinstance(ref, bool):
            cfg[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(ref, int):
            cfg[key] = int(raw)
        elif isinstance(ref, float):
            cfg[key] = float(raw)
        else:
            cfg[key] = raw
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None and not (isinstance(flag, bool) and not flag):
            cfg[key] = flag
    return cfg


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _finish(table: ResultTable) -> int:
    for row in table.rows:
        print(f"{row.row_id}: estimate={row.estimate:.6g} oracle={row.oracle:.6g} "
              f"tol={row.tol:.3g} [{row.verdict}]")
    bad = table.first_failure()
    if bad is not None:
        print(f"FAIL: row {bad.row_id} missed its oracle "
              f"({bad.estimate:.6g} vs {bad.oracle:.6g}, tol {bad.tol:.3g})",
              file=sys.stderr)
        return 1
    return 0


def _check_outdir(path: str | None) -> None:
    if path is None:
        return
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as exc:
        raise SystemExit(f"output directory not writable: {path} ({exc})")


def _write_summary(outdir: str | None, command: str, config: dict,
                   rows: list | None = None, all_pass: bool | None = None,
                   files: list[str] | None = None) -> None:
    """One machine-readable JSON document per run (generative runs included)."""
    if outdir is None:
        return
    payload = {"command": command, "config": {k: str(v) for k, v in config.items()},
               "files": files or []}
    if rows is not None:
        payload["rows"] = rows
    if all_pass is not None:
        payload["all_pass"] = all_pass
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2)


# -- subcommand drivers ----------------------------------------------------------


def _experiment_defaults(reps: int, command: str) -> dict:
    return dict(seed=20240601, out=os.path.join("chaoslim-out", command),
                workers=min(8, os.cpu_count() or 1),
                levy="rademacher", representation="cp", theta=1.0,
                reps=reps, tolerance_scale=1.0)


def _run_spec(spec: ExperimentSpec, out: str) -> int:
    # spec is validated before any directory is touched
    _check_outdir(out)
    spec.outdir = out
    return _finish(run_experiment(spec))


def _cmd_covariance(args) -> int:
    cfg = _experiment_defaults(10**4, "covariance")
    cfg.update(p=args.p, beta=args.beta, n=args.n, lags=args.lags)
    cfg = _merge_config(args, cfg)
    spec = ExperimentSpec(regime="cov", p=cfg["p"], beta=cfg["beta"], n=cfg["n"],
                          levy=cfg["levy"], representation=cfg["representation"],
                          replications=cfg["reps"], lags=_parse_int_list(cfg["lags"]),
                          seed=cfg["seed"], theta=cfg["theta"],
                          workers=cfg["workers"], tolerance_scale=cfg["tolerance_scale"],
                          exploratory=True)
    return _run_spec(spec, cfg["out"])


def _cmd_clt(args) -> int:
    cfg = _experiment_defaults(2000, "clt")
    cfg.update(p=args.p, beta=args.beta, n=args.n, lags=args.lags,
               sigma2_tol=args.sigma2_tol)
    cfg = _merge_config(args, cfg)
    spec = ExperimentSpec(regime="clt", p=cfg["p"], beta=cfg["beta"], n=cfg["n"],
                          levy=cfg["levy"], representation=cfg["representation"],
                          replications=cfg["reps"], lags=_parse_int_list(cfg["lags"]),
                          seed=cfg["seed"], theta=cfg["theta"],
                          workers=cfg["workers"], sigma2_tol=cfg["sigma2_tol"],
                          tolerance_scale=cfg["tolerance_scale"])
    return _run_spec(spec, cfg["out"])


def _cmd_nclt(args) -> int:
    cfg = _experiment_defaults(2000, "nclt")
    cfg.update(p=args.p, beta=args.beta, ladder=args.ladder, lags=args.lags,
               convention=args.convention, exploratory=args.exploratory)
    cfg = _merge_config(args, cfg)
    spec = ExperimentSpec(regime="nclt", p=cfg["p"], beta=cfg["beta"],
                          ladder=_parse_int_list(cfg["ladder"]),
                          levy=cfg["levy"], representation=cfg["representation"],
                          replications=cfg["reps"], lags=_parse_int_list(cfg["lags"]),
                          seed=cfg["seed"], theta=cfg["theta"],
                          workers=cfg["workers"], convention=cfg["convention"],
                          exploratory=cfg["exploratory"],
                          tolerance_scale=cfg["tolerance_scale"])
    return _run_spec(spec, cfg["out"])


def _cmd_moments(args) -> int:
    cfg = dict(p=args.p, beta=args.beta, r=args.r, t=args.t, mu_f=args.mu_f,
               gaussian_sigma2=args.gaussian_sigma2, seed=20240601, out=None)
    cfg = _merge_config(args, cfg)
    ts = _parse_float_list(cfg["t"]) if cfg["t"] else (1.0,) * cfg["r"]
    if len(ts) != cfg["r"]:
        raise SystemExit(f"--t must list r={cfg['r']} times")
    res = hermite_joint_moment(cfg["p"], cfg["beta"], cfg["mu_f"], ts, seed=cfg["seed"])
    lines = [("hermite", cfg["p"], cfg["beta"], ":".join(map(str, ts)),
              res.value, res.stderr)]
    if cfg["gaussian_sigma2"] is not None:
        gv = gaussian_joint_moment(cfg["gaussian_sigma2"], ts)
        lines.append(("gaussian", cfg["p"], cfg["beta"], ":".join(map(str, ts)), gv, 0.0))
    print("family,p,beta,t,value,stderr")
    for row in lines:
        print(",".join(str(v) for v in row))
    if cfg["out"]:
        _check_outdir(cfg["out"])
        path = os.path.join(cfg["out"], "formula_moments.csv")
        with open(path, "w") as fh:
            fh.write(f"# chaoslim {__version__}\n")
            for k in sorted(cfg):
                fh.write(f"# {k} = {cfg[k]}\n")
            fh.write("family,p,beta,t,value,stderr\n")
            for row in lines:
                fh.write(",".join(str(v) for v in row) + "\n")
        _write_summary(cfg["out"], "moments", cfg,
                       rows=[dict(zip(("family", "p", "beta", "t", "value", "stderr"),
                                      row)) for row in lines],
                       files=[path])
    return 0


def _cmd_hermite(args) -> int:
    cfg = dict(kind=args.kind, hurst=args.hurst, beta=args.beta, n=args.n,
               cells=args.cells, t=args.t, paths=args.paths, seed=20240601, out=None)
    cfg = _merge_config(args, cfg)
    rng = stream(cfg["seed"], 0, context=90)
    _check_outdir(cfg["out"])
    if cfg["kind"] == "fbm":
        h = cfg["hurst"]
        if h is None:
            if cfg["beta"] is None:
                raise SystemExit("fbm needs --hurst or --beta")
            h = hurst(1, cfg["beta"])
        paths = fbm_paths(h, cfg["n"], rng, cfg["paths"])
        print(f"fbm: H={h} n={cfg['n']} paths={cfg['paths']} "
              f"var_at_1={paths[:, -1].var():.4f}")
        if cfg["out"]:
            path = os.path.join(cfg["out"], "fbm_paths.csv")
            with open(path, "w") as fh:
                fh.write(f"# chaoslim {__version__}\n# hurst = {h}\n# n = {cfg['n']}\n"
                         f"# seed = {cfg['seed']}\n")
                fh.write("path,t,value\n")
                for i in range(paths.shape[0]):
                    for j in range(paths.shape[1]):
                        fh.write(f"{i},{j / cfg['n']},{float(paths[i, j])!r}\n")
            _write_summary(cfg["out"], "hermite", cfg, files=[path])
    else:
        if cfg["beta"] is None:
            raise SystemExit("rosenblatt needs --beta in (1/2, 1)")
        gen = RosenblattGenerator(cfg["beta"], t=cfg["t"], cells=cfg["cells"])
        vals = gen.sample(rng, cfg["paths"])
        dv = gen.discrete_variance()
        print(f"rosenblatt: beta={cfg['beta']} t={cfg['t']} cells={cfg['cells']} "
              f"oracle_var={dv:.4f} sample_var={vals.var():.4f}")
        if cfg["out"]:
            path = os.path.join(cfg["out"], "rosenblatt_samples.csv")
            with open(path, "w") as fh:
                fh.write(f"# chaoslim {__version__}\n# beta = {cfg['beta']}\n"
                         f"# t = {cfg['t']}\n# cells = {cfg['cells']}\n"
                         f"# seed = {cfg['seed']}\n# oracle_variance = {dv!r}\n")
                fh.write("sample,value\n")
                for i, v in enumerate(vals):
                    fh.write(f"{i},{float(v)!r}\n")
            _write_summary(cfg["out"], "hermite", cfg, files=[path])
    return 0


def _cmd_levycheck(args) -> int:
    cfg = dict(model=args.model, orders=args.orders, eps=args.eps, out=None)
    cfg = _merge_config(args, cfg)
    model = parse_levy_model(cfg["model"])
    orders = _parse_float_list(cfg["orders"])
    rows = []
    ok = True
    if isinstance(model, FiniteLevyMeasure):
        ti = model.tail_inverse()
        for r in orders:
            a, b = model.moment(r), levy_moment(ti, r)
            good = abs(a - b) <= 1e-8
            ok &= good
            rows.append((f"moment{r:g}", a, b, "pass" if good else "fail"))
    else:
        for r in orders:
            try:
                quad_val = levy_moment(model, r)
            except DivergentMomentError:
                rows.append((f"moment{r:g}", float("nan"), float("nan"), "divergent"))
                continue
            closed = model.moment_closed_form(r)
            good = abs(quad_val - closed) <= 1e-8
            ok &= good
            rows.append((f"moment{r:g}", quad_val, closed, "pass" if good else "fail"))
        for eps in _parse_float_list(cfg["eps"]):
            m, err = discretize(model, eps)
            good = err <= eps and abs(m.second_moment() - 1.0) < 1e-10
            ok &= good
            rows.append((f"discretize_eps{eps:g}", err, eps, "pass" if good else "fail"))
    print("check,value,reference,verdict")
    for row in rows:
        print(",".join(str(v) for v in row))
    if cfg["out"]:
        _check_outdir(cfg["out"])
        csv_path = os.path.join(cfg["out"], "levycheck.csv")
        with open(csv_path, "w") as fh:
            fh.write(f"# chaoslim {__version__}\n# model = {cfg['model']}\n")
            fh.write("check,value,reference,verdict\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")
        _write_summary(cfg["out"], "levycheck", cfg, all_pass=bool(ok),
                       rows=[dict(zip(("check", "value", "reference", "verdict"),
                                      row)) for row in rows],
                       files=[csv_path])
    if not ok:
        first = next(r for r in rows if r[3] == "fail")
        print(f"FAIL: {first[0]}", file=sys.stderr)
        return 1
    return 0


def _cmd_simulate(args) -> int:
    cfg = _experiment_defaults(1, "simulate")
    cfg["out"] = None  # print-only unless an output directory is requested
    cfg.update(p=args.p, beta=args.beta, n=args.n, norm=args.norm, tgrid=args.tgrid)
    cfg = _merge_config(args, cfg)
    _check_outdir(cfg["out"])
    law = make_return_law(cfg["beta"])
    levy = parse_levy_model(cfg["levy"])
    rng = stream(cfg["seed"], 0, context=7)
    frame = build_frame(law, levy, cfg["n"], cfg["representation"], rng)
    x = x_sequence(frame, cfg["p"], cfg["theta"])
    norm = cfg["norm"]
    if norm is None:
        norm = "sqrtn" if cfg["p"] * (cfg["beta"] - 1.0) < -1.0 else "prop"
    path_obj = partial_sums(x, law, cfg["p"], _parse_float_list(cfg["tgrid"]),
                            Normalization(norm))
    print(f"n={cfg['n']} paths={frame.n_paths} events={frame.event_time.size} "
          f"norm={norm} normalizer={path_obj.normalizer:.6g}")
    print("t,partial_sum")
    for t, v in zip(path_obj.tgrid, path_obj.values):
        print(f"{t},{float(v)!r}")
    if cfg["out"]:
        with open(os.path.join(cfg["out"], "xseq.csv"), "w") as fh:
            fh.write(f"# chaoslim {__version__}\n")
            for k in sorted(cfg):
                fh.write(f"# {k} = {cfg[k]}\n")
            fh.write("k,x\n")
            for k, v in enumerate(x, 1):
                fh.write(f"{k},{float(v)!r}\n")
        with open(os.path.join(cfg["out"], "partial_sums.csv"), "w") as fh:
            fh.write(f"# chaoslim {__version__}\n# norm = {norm}\n"
                     f"# normalizer = {path_obj.normalizer!r}\n# seed = {cfg['seed']}\n")
            fh.write("t,value\n")
            for t, v in zip(path_obj.tgrid, path_obj.values):
                fh.write(f"{t},{float(v)!r}\n")
        _write_summary(cfg["out"], "simulate", cfg,
                       files=[os.path.join(cfg["out"], "xseq.csv"),
                              os.path.join(cfg["out"], "partial_sums.csv")])
    return 0


def _cmd_report(args) -> int:
    from . import plots

    if args.inputs and args.kind and args.out:
        plots.render(plots.FigureSpec(inputs=tuple(args.inputs), kind=args.kind,
                                      out=args.out))
        print(f"wrote {args.out}")
        return 0
    if not args.dir:
        raise SystemExit("report needs either --dir or (--in, --kind, --out)")
    made = plots.render_run_dir(args.dir)
    for path in made:
        print(f"wrote {path}")
    if not made:
        print(f"no renderable CSVs found in {args.dir}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "covariance": _cmd_covariance,
    "clt": _cmd_clt,
    "nclt": _cmd_nclt,
    "moments": _cmd_moments,
    "hermite": _cmd_hermite,
    "levycheck": _cmd_levycheck,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
