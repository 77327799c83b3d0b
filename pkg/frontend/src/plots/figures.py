"""Figure definitions and rendering.

Each figure is declared by the CSV files it consumes; the files are
located anywhere below the input directory (the runner writes one
subdirectory per experiment, but a flat layout works too).  Rendering is
read-only on the inputs and deterministic: fixed figure sizes, fixed
150 dpi raster output, no embedded timestamps.
"""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FIGURES", "FigureError", "render_figures", "load_table"]

DPI = 150

# external CSV contract of the experiment runner: column names per file,
# with the columns that hold labels rather than numbers
_SCHEMAS = {
    "convergence.csv": (["t_skip", "E0", "E1", "E2", "converged"], ()),
    "eigenvalues.csv": (["index", "lambda"], ()),
    "linear.csv": (["t_skip", "err_norm", "n_t", "r_t", "sigma_min"], ()),
    "gauss.csv": (["t_skip", "err", "res", "res_delta", "healed_res",
                   "healed_res_delta", "fp_correction"], ()),
    "gauss_series.csv": (["series_id", "coord1", "coord2", "t"],
                         ("series_id",)),
    "projected.csv": (["x2", "drift"], ()),
    "mc_error.csv": (["t_skip", "err", "converged", "start_label"],
                     ("start_label",)),
    "mc_sampling.csv": (["N", "std_component2"], ()),
    "geometry.csv": (["series_id", "coord1", "coord2", "t"], ("series_id",)),
}


class FigureError(ValueError):
    """Raised for missing or malformed figure inputs."""


def load_table(path):
    """Read one runner CSV as a dict of column arrays.

    The header must match the schema exactly; numeric cells that fail to
    parse raise FigureError naming the file and the first bad row.
    """
    path = Path(path)
    header_exp, text_cols = _SCHEMAS[path.name]
    lines = [ln.rstrip("\n") for ln in path.read_text().splitlines()
             if ln.strip()]
    if not lines or lines[0].split(",") != header_exp:
        raise FigureError(f"{path}: header does not match the expected "
                          f"columns {header_exp}")
    cols = {name: [] for name in header_exp}
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header_exp):
            raise FigureError(f"{path}: row {i} has {len(cells)} cells, "
                              f"expected {len(header_exp)}")
        for name, cell in zip(header_exp, cells):
            if name not in text_cols:
                try:
                    cell = float(cell)
                except ValueError:
                    raise FigureError(f"{path}: row {i}: non-numeric value "
                                      f"{cell!r} in column '{name}'") from None
            cols[name].append(cell)
    return {name: np.array(vals) for name, vals in cols.items()}


def _find_csv(input_dir, name):
    hits = sorted(Path(input_dir).rglob(name))
    if not hits:
        raise FigureError(f"missing input file {name!r} under {input_dir}")
    return hits[0]


def _constants(csv_path):
    """Model constants from the manifest written next to the CSV, if any."""
    manifest = Path(csv_path).parent / "manifest.json"
    if not manifest.exists():
        return {}
    with open(manifest) as fh:
        params = json.load(fh).get("params", {})
    return {k: params[k] for k in ("lambda3", "lambda4") if k in params}


def _guide(ax, t, rate, anchor_t, anchor_v, label):
    """Exponential guide line through (anchor_t, anchor_v) with the given
    rate, drawn over the span of t."""
    tt = np.linspace(np.min(t), np.max(t), 50)
    ax.plot(tt, anchor_v * np.exp(rate * (tt - anchor_t)), "k--", lw=0.8,
            label=label)


def _fig3(tables, out_path):
    tab = tables["convergence.csv"]
    ok = tab["converged"] > 0
    fig, ax = plt.subplots(figsize=(5, 4))
    for col, marker in (("E0", "o"), ("E1", "s"), ("E2", "^")):
        ax.semilogy(tab["t_skip"][ok], tab[col][ok], marker + "-",
                    ms=3, label=col)
    ax.set_xlabel("healing time")
    ax.set_ylabel("flow approximation error")
    ax.legend()
    _save(fig, out_path)


def _fig4(tables, out_path):
    tab = tables["eigenvalues.csv"]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(tab["index"], tab["lambda"], "o", ms=4)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("mode index")
    ax.set_ylabel("eigenvalue")
    _save(fig, out_path)


def _fig5(tables, out_path, constants):
    tab = tables["linear.csv"]
    t = tab["t_skip"]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.semilogy(t, tab["err_norm"], "o-", ms=3, label="flow error")
    ax.semilogy(t, tab["r_t"], "s-", ms=3, label="residual part")
    ax.semilogy(t, tab["sigma_min"], "^-", ms=3, label="smallest singular value")
    lam3, lam4 = constants.get("lambda3"), constants.get("lambda4")
    if lam3 is not None and lam4 is not None:
        _guide(ax, t, lam4, t[0], tab["r_t"][0], "rate $\\lambda_4$")
        _guide(ax, t, lam3, t[0], tab["sigma_min"][0], "rate $\\lambda_3$")
        _guide(ax, t, lam4 - lam3, t[0], tab["err_norm"][0],
               "rate $\\lambda_4-\\lambda_3$")
    ax.set_xlabel("healing time")
    ax.legend(fontsize=8)
    _save(fig, out_path)


def _fig6(tables, out_path):
    err = tables["mc_error.csv"]
    samp = tables["mc_sampling.csv"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for label in dict.fromkeys(err["start_label"]):
        mask = (err["start_label"] == label) & np.isfinite(err["err"]) \
            & (err["err"] > 0)
        ax1.semilogy(err["t_skip"][mask], err["err"][mask], "o-", ms=3,
                     label=str(label))
    ax1.set_xlabel("healing time")
    ax1.set_ylabel("error against the reference solve")
    ax1.legend()
    n, std = samp["N"], samp["std_component2"]
    ax2.loglog(n, std, "o-", ms=4, label="sampling std")
    ax2.loglog(n, std[0] * np.sqrt(n[0] / n), "k--", lw=0.8,
               label="$N^{-1/2}$")
    ax2.set_xlabel("ensemble size")
    ax2.legend()
    _save(fig, out_path)


def _fig7(tables, out_path, constants):
    tab = tables["gauss.csv"]
    series = tables["gauss_series.csv"]
    t = tab["t_skip"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.semilogy(t, tab["err"], "o-", ms=3, label="flow error")
    ax1.semilogy(t, tab["healed_res"], "s-", ms=3, label="healed residual")
    ax1.semilogy(t, tab["fp_correction"], "-", color="gold",
                 label="fixed-point correction")
    lam3, lam4 = constants.get("lambda3"), constants.get("lambda4")
    if lam3 is not None and lam4 is not None:
        _guide(ax1, t, lam4, t[0], tab["healed_res"][0], "rate $\\lambda_4$")
        _guide(ax1, t, lam4 - lam3, t[0], tab["err"][0],
               "rate $\\lambda_4-\\lambda_3$")
    ax1.set_xlabel("healing time")
    ax1.legend(fontsize=8)
    for label in dict.fromkeys(series["series_id"]):
        mask = series["series_id"] == label
        ax2.plot(series["coord1"][mask], series["coord2"][mask], "o-",
                 ms=2, label=str(label))
    ax2.set_xlabel("mean")
    ax2.set_ylabel("variance")
    ax2.legend()
    _save(fig, out_path)


def _fig8(tables, out_path):
    tab = tables["projected.csv"]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(tab["x2"], tab["drift"], "o-", ms=3)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("mean coordinate")
    ax.set_ylabel("coarse drift")
    _save(fig, out_path)


def _save(fig, out_path):
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)


# figure id -> (required CSV files, whether slope guides use manifest
# constants)
FIGURES = {
    "fig3": (("convergence.csv",), False),
    "fig4": (("eigenvalues.csv",), False),
    "fig5": (("linear.csv",), True),
    "fig6": (("mc_error.csv", "mc_sampling.csv"), False),
    "fig7": (("gauss.csv", "gauss_series.csv"), True),
    "fig8": (("projected.csv",), False),
}

_RENDERERS = {"fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6,
              "fig7": _fig7, "fig8": _fig8}


def render_figures(input_dir, figure_ids=None, output_dir="."):
    """Render the requested figures from the CSVs below input_dir.

    Returns the list of written image paths (one PNG per figure id, in
    sorted id order).  Raises FigureError for unknown ids and for missing
    or malformed inputs.
    """
    ids = sorted(FIGURES) if figure_ids is None else sorted(figure_ids)
    unknown = [i for i in ids if i not in FIGURES]
    if unknown:
        raise FigureError(f"unknown figure id(s) {unknown}; "
                          f"expected {sorted(FIGURES)}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fid in ids:
        names, uses_constants = FIGURES[fid]
        paths = {name: _find_csv(input_dir, name) for name in names}
        tables = {name: load_table(path) for name, path in paths.items()}
        out_path = output_dir / f"{fid}.png"
        if uses_constants:
            _RENDERERS[fid](tables, out_path, _constants(paths[names[0]]))
        else:
            _RENDERERS[fid](tables, out_path)
        written.append(out_path)
    return written
