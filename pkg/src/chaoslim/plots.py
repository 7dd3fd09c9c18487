"""Report figures from the experiment CSVs; no simulation or statistics here.

Four figure kinds are supported: covariance-loglog, qq, scaling, and
moments-bars.  Inputs are only the CSV files written by the harness; the
reference-slope annotations come from the (p, beta) values embedded in the
CSV '#' headers, never from re-estimation.  Rendering is deterministic:
fixed style, no timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.special import ndtri

__all__ = ["FigureSpec", "render", "render_run_dir", "main"]

KINDS = ("covariance-loglog", "qq", "scaling", "moments-bars")

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "chaoslim",
}


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[str, ...]
    kind: str
    out: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")


class SchemaError(ValueError):
    pass


def read_table(path: str):
    """Parse a harness CSV: '#' header dict, column names, string cell rows."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"input CSV not found: {path}")
    header: dict[str, str] = {}
    columns: list[str] | None = None
    rows: list[list[str]] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            if columns is None:
                columns = [c.strip() for c in line.split(",")]
                continue
            rows.append([c.strip() for c in line.split(",")])
    if columns is None or not rows:
        raise SchemaError(f"no data rows in {path}")
    return header, columns, rows


def _col(columns, rows, name, path, numeric=True):
    if name not in columns:
        raise SchemaError(f"column {name!r} missing from {path}")
    idx = columns.index(name)
    vals = [r[idx] for r in rows]
    if not numeric:
        return vals
    try:
        return np.array([float(v) for v in vals])
    except ValueError:
        raise SchemaError(f"column {name!r} in {path} is not numeric")


def _save(fig, out: str) -> None:
    meta = {"Date": None} if out.lower().endswith(".svg") else {}
    fig.savefig(out, metadata=meta)
    plt.close(fig)


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    with plt.rc_context(_STYLE):
        if spec.kind == "covariance-loglog":
            _covariance_loglog(spec)
        elif spec.kind == "qq":
            _qq(spec)
        elif spec.kind == "scaling":
            _scaling(spec)
        else:
            _moments_bars(spec)
    return spec.out


def _covariance_loglog(spec: FigureSpec) -> None:
    path = spec.inputs[0]
    header, cols, rows = read_table(path)
    lag = _col(cols, rows, "lag", path)
    est = _col(cols, rows, "estimate", path)
    se = _col(cols, rows, "stderr", path)
    oracle = _col(cols, rows, "oracle", path)
    keep = lag >= 1
    if not np.any(keep):
        raise SchemaError(f"{path} has no positive lags to plot on log axes")
    fig, ax = plt.subplots()
    ax.errorbar(lag[keep], np.abs(est[keep]), yerr=se[keep], fmt="o", ms=4,
                capsize=3, label="Monte Carlo")
    ax.plot(lag[keep], oracle[keep], "k-", lw=1.2, label="exact oracle")
    p = int(header.get("p", "0") or 0)
    beta = float(header.get("beta", "nan") or "nan")
    if p and not math.isnan(beta):
        slope = p * (beta - 1.0)
        anchor = oracle[keep][0] * (lag[keep] / lag[keep][0]) ** slope
        ax.plot(lag[keep], anchor, "--", color="tab:red", lw=1.0,
                label=f"reference slope {slope:g}")
        ax.set_title(f"covariance decay, p={p}, beta={beta:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("lag")
    ax.set_ylabel("covariance")
    ax.legend()
    _save(fig, spec.out)


def _qq(spec: FigureSpec) -> None:
    path = spec.inputs[0]
    header, cols, rows = read_table(path)
    vals = np.sort(_col(cols, rows, "value", path))
    n = vals.size
    sd = vals.std(ddof=1) if n > 1 else 1.0
    mean = vals.mean()
    theo = ndtri((np.arange(1, n + 1) - 0.5) / n)
    fig, ax = plt.subplots()
    ax.plot(theo, (vals - mean) / sd, ".", ms=2.5, label="sample")
    lim = max(abs(theo[0]), abs(theo[-1]))
    ax.plot([-lim, lim], [-lim, lim], "k--", lw=1.0, label="Gaussian reference")
    ax.set_xlabel("normal quantiles")
    ax.set_ylabel("standardized sample quantiles")
    ax.set_title(f"marginal QQ ({header.get('regime', '?')}, "
                 f"p={header.get('p', '?')}, beta={header.get('beta', '?')})")
    ax.legend()
    _save(fig, spec.out)


def _scaling(spec: FigureSpec) -> None:
    path = spec.inputs[0]
    header, cols, rows = read_table(path)
    n = _col(cols, rows, "n", path)
    var = _col(cols, rows, "variance", path)
    se = _col(cols, rows, "stderr", path)
    fig, ax = plt.subplots()
    ax.errorbar(n, var, yerr=se, fmt="o", ms=4, capsize=3, label="raw-sum variance")
    fitted = header.get("fitted_slope")
    ref = header.get("reference_slope")
    if fitted is not None:
        s = float(fitted)
        anchor = var[0] * (n / n[0]) ** s
        ax.plot(n, anchor, "-", lw=1.2, color="tab:orange",
                label=f"fitted slope {s:.3f}")
    if ref is not None:
        s = float(ref)
        anchor = var[0] * (n / n[0]) ** s
        ax.plot(n, anchor, "--", lw=1.0, color="tab:red",
                label=f"reference slope {s:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("Var of raw partial sum")
    ax.set_title(f"variance scaling (p={header.get('p', '?')}, "
                 f"beta={header.get('beta', '?')})")
    ax.legend()
    _save(fig, spec.out)


def _moments_bars(spec: FigureSpec) -> None:
    path = spec.inputs[0]
    header, cols, rows = read_table(path)
    labels = _col(cols, rows, "order", path, numeric=False)
    est = _col(cols, rows, "estimate", path)
    se = _col(cols, rows, "stderr", path)
    formula = _col(cols, rows, "formula", path)
    xs = np.arange(len(labels))
    fig, ax = plt.subplots()
    ax.bar(xs, est, yerr=np.where(np.isnan(se), 0.0, se), capsize=3,
           color="tab:blue", alpha=0.7, label="estimate")
    ax.plot(xs, formula, "k_", ms=18, mew=2, label="formula")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("moment value")
    ax.set_title(f"moments vs formulas (p={header.get('p', '?')}, "
                 f"beta={header.get('beta', '?')})")
    ax.legend()
    _save(fig, spec.out)


_RUN_DIR_KINDS = (
    ("covariance.csv", "covariance-loglog", "covariance_loglog.png"),
    ("marginal.csv", "qq", "marginal_qq.png"),
    ("scaling.csv", "scaling", "scaling.png"),
    ("moments.csv", "moments-bars", "moments_bars.png"),
)


def render_run_dir(run_dir: str) -> list[str]:
    """Render every figure whose input CSV exists in the run directory."""
    made = []
    for csv_name, kind, img_name in _RUN_DIR_KINDS:
        src = os.path.join(run_dir, csv_name)
        if os.path.exists(src):
            out = os.path.join(run_dir, img_name)
            render(FigureSpec(inputs=(src,), kind=kind, out=out))
            made.append(out)
    return made


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="chaoslim-plots",
        description="Render report figures from chaoslim CSV outputs.")
    ap.add_argument("--in", dest="inputs", nargs="+", required=True)
    ap.add_argument("--kind", choices=KINDS, required=True)
    ap.add_argument("--out", required=True, help="image path (.png or .svg)")
    args = ap.parse_args(argv)
    try:
        render(FigureSpec(inputs=tuple(args.inputs), kind=args.kind, out=args.out))
    except (FileNotFoundError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
