"""Render harness CSVs into the three figure kinds.

The input schema is the harness CSV contract: the required columns
``experiment,trial,groups,K,Kprime,T,loss_sup,eps_perf,eps_approx,eps_samp,
eps_alg,wall_ms`` plus the documented optional columns each figure needs.
Everything here is presentation-only: the builders merely group rows and
average columns that the harness already computed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = [
    "experiment", "trial", "groups", "K", "Kprime", "T",
    "loss_sup", "eps_perf", "eps_approx", "eps_samp", "eps_alg", "wall_ms",
]

FIGURE_KINDS = ("fig1", "fig2", "tightness_heatmap")

# Optional columns each figure kind needs on top of the required schema.
KIND_COLUMNS = {
    "fig1": [],
    "fig2": [],
    "tightness_heatmap": ["beta_p", "beta_r", "gap"],
}


class SchemaError(ValueError):
    """CSV does not match the harness schema; the message names the column."""


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    csv_path: str
    out_path: str
    title: str | None = None
    log_x: bool | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}")


def load_rows(csv_path: str, kind: str) -> list[dict]:
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS + KIND_COLUMNS[kind]:
            if column not in header:
                raise SchemaError(f"missing column '{column}' in {csv_path}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"no rows in {csv_path}")
    return rows


def _mean_by(rows: list[dict], keys: tuple[str, ...], value: str) -> dict[tuple, float]:
    buckets: dict[tuple, list[float]] = {}
    for row in rows:
        buckets.setdefault(tuple(float(row[k]) for k in keys), []).append(float(row[value]))
    return {k: float(np.mean(v)) for k, v in buckets.items()}


def build_fig1_data(rows: list[dict]) -> dict:
    """Mean sup-norm loss per (per-pair budget, group count)."""
    means = _mean_by(rows, ("Kprime", "groups"), "loss_sup")
    kprimes = sorted({k for k, _ in means})
    group_counts = sorted({g for _, g in means})
    table = np.array([[means[(k, g)] for k in kprimes] for g in group_counts])
    return {"kprimes": kprimes, "group_counts": group_counts, "mean_loss": table}


def build_fig2_data(rows: list[dict]) -> dict:
    """Mean sup-norm loss per (group count, total sample budget)."""
    means = _mean_by(rows, ("groups", "K"), "loss_sup")
    group_counts = sorted({g for g, _ in means})
    k_values = sorted({k for _, k in means})
    table = np.array([[means[(g, k)] for k in k_values] for g in group_counts])
    return {"group_counts": group_counts, "k_values": k_values, "mean_loss": table}


def build_heatmap_matrix(rows: list[dict]) -> dict:
    """Gap value on the (beta_p, beta_r) grid; duplicates averaged."""
    means = _mean_by(rows, ("beta_p", "beta_r"), "gap")
    beta_p = sorted({p for p, _ in means})
    beta_r = sorted({r for _, r in means})
    matrix = np.full((len(beta_p), len(beta_r)), np.nan)
    for (p, r), value in means.items():
        matrix[beta_p.index(p), beta_r.index(r)] = value
    if np.isnan(matrix).any():
        raise SchemaError("beta grid is not complete: some (beta_p, beta_r) cells are missing")
    return {"beta_p": beta_p, "beta_r": beta_r, "gap": matrix}


def _render_fig1(rows: list[dict], spec: PlotSpec, ax) -> None:
    data = build_fig1_data(rows)
    width = 0.8 / len(data["group_counts"])
    x = np.arange(len(data["kprimes"]))
    for i, g in enumerate(data["group_counts"]):
        ax.bar(x + i * width, data["mean_loss"][i], width, label=f"|g|={int(g)}")
    ax.set_xticks(x + width * (len(data["group_counts"]) - 1) / 2)
    ax.set_xticklabels([f"K'={int(k)}" for k in data["kprimes"]])
    ax.set_ylabel("mean sup-norm loss")
    ax.set_title(spec.title or "grouped vs non-grouped pipeline loss")
    ax.legend()


def _render_fig2(rows: list[dict], spec: PlotSpec, ax) -> None:
    data = build_fig2_data(rows)
    for i, g in enumerate(data["group_counts"]):
        ax.plot(data["k_values"], data["mean_loss"][i], marker="o", label=f"|g|={int(g)}")
    if spec.log_x is not False:
        ax.set_xscale("log")
    ax.set_xlabel("total samples K")
    ax.set_ylabel("mean sup-norm loss")
    ax.set_title(spec.title or "loss versus sample budget")
    ax.legend()


def _render_heatmap(rows: list[dict], spec: PlotSpec, ax, fig) -> None:
    data = build_heatmap_matrix(rows)
    image = ax.imshow(
        data["gap"].T,
        origin="lower",
        aspect="auto",
        extent=(min(data["beta_p"]), max(data["beta_p"]),
                min(data["beta_r"]), max(data["beta_r"])),
    )
    ax.set_xlabel("transition deviation")
    ax.set_ylabel("reward deviation")
    ax.set_title(spec.title or "half-bound vs realized approximation gap")
    fig.colorbar(image, ax=ax)


def render(spec: PlotSpec) -> str:
    """Render the figure and write it to spec.out_path; returns the path."""
    rows = load_rows(spec.csv_path, spec.kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        if spec.kind == "fig1":
            _render_fig1(rows, spec, ax)
        elif spec.kind == "fig2":
            _render_fig2(rows, spec, ax)
        else:
            _render_heatmap(rows, spec, ax, fig)
        fig.tight_layout()
        fig.savefig(spec.out_path)
    finally:
        plt.close(fig)
    return spec.out_path
