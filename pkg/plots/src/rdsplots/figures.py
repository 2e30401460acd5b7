"""The four figure kinds.

scaling    -- stability.csv: log-log sup-difference vs eps with the fitted
              line and the C*eps*|log eps| reference curve
agreement  -- response.csv: response-series values against the
              finite-difference oracle with the identity line
decay      -- spectrum.csv / variance_terms.csv: per-eps semilog decay of
              (eps, n, value[, fit]) rows
histogram  -- clt_samples.csv: normalized Birkhoff sums against the
              matching normal density

Figures are deterministic: fixed style, fixed size, no timestamps, and a
pinned PNG metadata block, so re-rendering an identical CSV reproduces
identical bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import matplotlib.pyplot as plt

KINDS = ("scaling", "agreement", "decay", "histogram")

REQUIRED_COLUMNS = {
    "scaling": ("eps", "path_id", "diff_w"),
    "agreement": ("path_id", "value_series", "value_fd"),
    "decay": ("eps", "n", "value"),
    "histogram": ("trial", "value", "sigma2"),
}

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}

_METADATA = {"Software": "rdsplots"}


class InputError(ValueError):
    """Malformed input: missing file, bad CSV, unknown figure kind."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    title: str | None = None
    options: dict = field(default_factory=dict)


def read_csv(path: str | Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input CSV not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(
                f"{path.name}: missing required column(s) {', '.join(missing)}"
            )
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for col in header:
        values = [r[col] for r in rows]
        try:
            out[col] = np.array([float(v) for v in values])
        except (TypeError, ValueError) as exc:
            if col in required:
                raise InputError(
                    f"{path.name}: non-numeric value in column {col}"
                ) from exc
            out[col] = np.array(values, dtype=object)  # label columns
    return out


def _no_data(ax, message: str = "no data") -> None:
    ax.text(
        0.5, 0.5, message, ha="center", va="center",
        transform=ax.transAxes, fontsize=14, color="0.4",
    )


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _draw_scaling(ax, data: dict[str, np.ndarray]) -> None:
    eps = np.unique(data["eps"])
    sup = np.array([data["diff_w"][data["eps"] == e].max() for e in eps])
    ax.loglog(eps, sup, "o", color="C0", label="sup difference")
    if len(eps) >= 2:
        x = np.log(eps * np.abs(np.log(eps)))
        slope, intercept = _fit_line(x, np.log(sup))
        grid = np.geomspace(eps.min(), eps.max(), 64)
        xg = np.log(grid * np.abs(np.log(grid)))
        ax.loglog(grid, np.exp(intercept + slope * xg), "-", color="C1",
                  label=f"fit, slope {slope:.3f}")
        cref = math.exp(intercept)
        ax.loglog(grid, cref * grid * np.abs(np.log(grid)), "--", color="C2",
                  label=f"{cref:.3g} eps |log eps|")
    ax.set_xlabel("eps")
    ax.set_ylabel("sup weak-norm difference")
    ax.legend()


def _draw_agreement(ax, data: dict[str, np.ndarray]) -> None:
    series = data["value_series"]
    fd = data["value_fd"]
    ax.plot(fd, series, "o", color="C0", ms=4)
    lo = float(min(fd.min(), series.min()))
    hi = float(max(fd.max(), series.max()))
    pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1e-12)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "-", color="0.5", lw=1)
    rel = np.max(np.abs(series - fd) / np.maximum(np.abs(fd), 1e-300))
    ax.set_xlabel("finite-difference value")
    ax.set_ylabel("series value")
    ax.set_title(f"max relative deviation {rel:.2e}", fontsize=9)


def _draw_decay(ax, data: dict[str, np.ndarray]) -> None:
    floor = 1e-17
    for i, e in enumerate(np.unique(data["eps"])):
        sel = data["eps"] == e
        n = data["n"][sel]
        order = np.argsort(n)
        ax.semilogy(n[order], np.maximum(data["value"][sel][order], floor),
                    "o-", ms=3, color=f"C{i % 10}", label=f"eps = {e:g}")
        if "fit" in data:
            ax.semilogy(n[order], np.maximum(data["fit"][sel][order], floor),
                        "--", lw=1, color=f"C{i % 10}")
    ax.set_xlabel("n")
    ax.set_ylabel("value")
    ax.legend()


def _draw_histogram(ax, data: dict[str, np.ndarray]) -> None:
    values = data["value"]
    sigma2 = float(data["sigma2"][0])
    ax.hist(values, bins=60, density=True, color="C0", alpha=0.6,
            label=f"{values.size} trials")
    lim = float(np.max(np.abs(values)))
    grid = np.linspace(-lim, lim, 256)
    sigma = math.sqrt(sigma2)
    pdf = np.exp(-0.5 * (grid / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    ax.plot(grid, pdf, "-", color="C3", label=f"normal, variance {sigma2:.4g}")
    ax.set_xlabel("normalized Birkhoff sum")
    ax.set_ylabel("density")
    ax.legend()


_DRAWERS = {
    "scaling": _draw_scaling,
    "agreement": _draw_agreement,
    "decay": _draw_decay,
    "histogram": _draw_histogram,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path.

    Raises InputError for unknown kinds, missing files, or missing
    columns.  An empty (header-only) CSV renders a 'no data' banner.
    """
    if spec.kind not in KINDS:
        raise InputError(f"unknown figure kind {spec.kind!r}; expected one of {KINDS}")
    if len(spec.inputs) != 1:
        raise InputError(f"figure kind {spec.kind!r} takes exactly one input CSV")
    data = read_csv(spec.inputs[0], REQUIRED_COLUMNS[spec.kind])
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            first = REQUIRED_COLUMNS[spec.kind][0]
            if data[first].size == 0:
                _no_data(ax)
            else:
                _DRAWERS[spec.kind](ax, data)
            if spec.title:
                ax.set_title(spec.title)
            fig.tight_layout()
            fig.savefig(out, format="png", metadata=dict(_METADATA))
        finally:
            plt.close(fig)
    return out
