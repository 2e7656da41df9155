"""Render experiment CSV outputs into figures.

Three figure kinds cover the standard outputs:

* ``loss-curve``   - loss_curve.csv, one panel per method (EB left, KF right)
* ``histogram``    - estimates.csv, histogram per method with fixed bin edges
* ``error-vs-q``   - l2curve.csv, log2 mean squared error vs level, one line
                     per kernel exponent

Rendering is deterministic: inputs are never mutated, rows are sorted before
drawing, and image metadata that would embed timestamps is suppressed so a
re-render is byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_KINDS = ("loss-curve", "histogram", "error-vs-q")

_SCHEMAS = {
    "loss-curve": ["instance", "method", "param_value", "loss"],
    "histogram": ["instance", "method", "param_name", "estimate", "min_loss",
                  "hit_boundary", "status"],
    "error-vs-q": ["t", "q", "mean_sq_error", "n_instances"],
}


class SchemaMismatchError(ValueError):
    """The input CSV does not match the expected schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    input: str
    out: str
    xscale: str = "linear"
    yscale: str = "linear"
    bins: int = 24
    bounds: tuple = None       # histogram bin-edge box, e.g. [0.6, 10.0]
    param_name: str = None     # histogram: restrict to one parameter
    title: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if self.kind == "histogram" and self.bounds is None:
            raise ValueError("histogram figures need 'bounds' for the fixed "
                             "bin edges")

    @classmethod
    def from_json(cls, path: str) -> "FigureSpec":
        with open(path) as fh:
            data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown figure spec keys: {sorted(unknown)}")
        if isinstance(data.get("bounds"), list):
            data["bounds"] = tuple(data["bounds"])
        return cls(**data)


def _read_rows(path: str, kind: str) -> list[dict]:
    expected = _SCHEMAS[kind]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in expected:
            if col not in header:
                raise SchemaMismatchError(
                    f"{path}: missing column {col!r} (expected {expected})")
        extra = [c for c in header if c not in expected]
        if extra:
            raise SchemaMismatchError(
                f"{path}: unexpected column {extra[0]!r} (expected {expected})")
        return list(reader)


def _save(fig, out: str) -> None:
    if out.endswith(".svg"):
        plt.rcParams["svg.hashsalt"] = "hkf-plot"
        fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out)
    plt.close(fig)


def _render_loss_curve(spec: FigureSpec) -> None:
    rows = _read_rows(spec.input, "loss-curve")
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, len(methods), figsize=(5.0 * len(methods), 3.6))
    if len(methods) == 1:
        axes = [axes]
    for ax, method in zip(axes, methods):
        sub = [r for r in rows if r["method"] == method]
        instances = sorted({int(r["instance"]) for r in sub})
        for inst in instances:
            pts = sorted(((float(r["param_value"]), float(r["loss"]))
                          for r in sub if int(r["instance"]) == inst))
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    lw=0.9, alpha=min(1.0, 3.0 / len(instances)), color="C0")
        ax.set_xscale(spec.xscale)
        ax.set_yscale(spec.yscale)
        ax.set_xlabel("parameter")
        ax.set_ylabel("loss")
        ax.set_title(method)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    _save(fig, spec.out)


def _render_histogram(spec: FigureSpec) -> None:
    rows = [r for r in _read_rows(spec.input, "histogram") if r["status"] == "ok"]
    if spec.param_name:
        rows = [r for r in rows if r["param_name"] == spec.param_name]
    methods = sorted({r["method"] for r in rows})
    lo, hi = spec.bounds
    edges = [lo + (hi - lo) * i / spec.bins for i in range(spec.bins + 1)]
    fig, axes = plt.subplots(1, max(len(methods), 1),
                             figsize=(4.2 * max(len(methods), 1), 3.4))
    if len(methods) <= 1:
        axes = [axes]
    for ax, method in zip(axes, methods):
        vals = [float(r["estimate"]) for r in rows if r["method"] == method]
        ax.hist(vals, bins=edges, color="C0", edgecolor="white")
        ax.set_xlabel("estimate")
        ax.set_ylabel("count")
        ax.set_title(method)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    _save(fig, spec.out)


def _render_error_vs_q(spec: FigureSpec) -> None:
    import math

    rows = _read_rows(spec.input, "error-vs-q")
    ts = sorted({float(r["t"]) for r in rows})
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for t in ts:
        pts = sorted((int(r["q"]), float(r["mean_sq_error"]))
                     for r in rows if float(r["t"]) == t)
        if len(pts) < 2:
            continue  # single-level sweep entries are not convergence curves
        ax.plot([p[0] for p in pts], [math.log2(p[1]) for p in pts],
                marker="o", label=f"t = {t:g}")
    ax.set_xscale(spec.xscale)
    ax.set_xlabel("level q")
    ax.set_ylabel("log2 mean squared error")
    ax.legend()
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    _save(fig, spec.out)


_RENDERERS = {
    "loss-curve": _render_loss_curve,
    "histogram": _render_histogram,
    "error-vs-q": _render_error_vs_q,
}


def render(spec: FigureSpec) -> str:
    """Render the figure described by ``spec``; returns the output path."""
    _RENDERERS[spec.kind](spec)
    return spec.out
