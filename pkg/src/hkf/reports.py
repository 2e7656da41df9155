"""Experiment reports and their CSV/JSON serialization.

Output files are byte-deterministic for a fixed config and seed: fixed column
order, newline-terminated rows, floats at 17 significant digits, no
timestamps.  Summary statistics are recomputed and checked whenever a report
is loaded back.
"""

from __future__ import annotations

import json
import math
import os
import platform
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_from_dict


def _scipy_version() -> str:
    import scipy
    return scipy.__version__


def fmt(x) -> str:
    """17-significant-digit decimal form (round-trips float64)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class InstanceRow:
    instance: int
    method: str
    param_name: str
    estimate: float
    min_loss: float
    hit_boundary: bool
    status: str = "ok"


@dataclass
class CurvePoint:
    instance: int
    method: str
    param_value: float
    loss: float


@dataclass
class L2Row:
    t: float
    q: int
    mean_sq_error: float
    n_instances: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    l2rows: list = field(default_factory=list)
    references: dict = field(default_factory=dict)  # "method.param" -> limiting value
    extra: dict = field(default_factory=dict)       # free-form diagnostics

    def summary(self) -> dict:
        return summarize(self.rows, self.references)

    def estimates(self, method: str, param_name: str = None,
                  ok_only: bool = True) -> np.ndarray:
        vals = [r.estimate for r in self.rows
                if r.method == method
                and (param_name is None or r.param_name == param_name)
                and (not ok_only or r.status == "ok")]
        return np.array(vals)

    def boundary_flags(self, method: str, param_name: str = None) -> np.ndarray:
        vals = [r.hit_boundary for r in self.rows
                if r.method == method
                and (param_name is None or r.param_name == param_name)
                and r.status == "ok"]
        return np.array(vals, dtype=bool)


def summarize(rows, references: dict) -> dict:
    out = {}
    keys = sorted({(r.method, r.param_name) for r in rows})
    for method, param in keys:
        ok = [r for r in rows if r.method == method and r.param_name == param
              and r.status == "ok"]
        key = f"{method}.{param}"
        entry = {"n_ok": len(ok), "n_total": sum(
            1 for r in rows if r.method == method and r.param_name == param)}
        if ok:
            est = np.array([r.estimate for r in ok])
            entry["mean"] = float(est.mean())
            entry["variance"] = float(est.var())
            entry["boundary_rate"] = float(np.mean([r.hit_boundary for r in ok]))
            ref = references.get(key)
            if ref is not None:
                entry["reference"] = float(ref)
                entry["normalized_variance"] = float(est.var() / ref**2)
        out[key] = entry
    return out


def _write_lines(path: str, header: str, lines) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")


def write_report(report: ExperimentReport, outdir: str) -> dict:
    """Write estimates.csv, loss_curve.csv, l2curve.csv (when populated) and
    report.json; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}

    rows = sorted(report.rows, key=lambda r: (r.instance, r.method, r.param_name))
    paths["estimates"] = os.path.join(outdir, "estimates.csv")
    _write_lines(
        paths["estimates"],
        "instance,method,param_name,estimate,min_loss,hit_boundary,status",
        (f"{r.instance},{r.method},{r.param_name},{fmt(r.estimate)},"
         f"{fmt(r.min_loss)},{fmt(r.hit_boundary)},{r.status}" for r in rows))

    if report.curves:
        curves = sorted(report.curves,
                        key=lambda c: (c.instance, c.method, c.param_value))
        paths["loss_curve"] = os.path.join(outdir, "loss_curve.csv")
        _write_lines(
            paths["loss_curve"],
            "instance,method,param_value,loss",
            (f"{c.instance},{c.method},{fmt(c.param_value)},{fmt(c.loss)}"
             for c in curves))

    if report.l2rows:
        l2 = sorted(report.l2rows, key=lambda r: (r.t, r.q))
        paths["l2curve"] = os.path.join(outdir, "l2curve.csv")
        _write_lines(
            paths["l2curve"],
            "t,q,mean_sq_error,n_instances",
            (f"{fmt(r.t)},{r.q},{fmt(r.mean_sq_error)},{r.n_instances}" for r in l2))

    payload = {
        "experiment": report.config.experiment,
        "config": report.config.to_dict(),
        "config_sha256": report.config.sha256(),
        "master_seed": report.config.seed,
        "versions": {
            "hkf": __version__,
            "numpy": np.__version__,
            "scipy": _scipy_version(),
            "python": platform.python_version(),
        },
        "references": {k: float(v) for k, v in report.references.items()},
        "summary": report.summary(),
        "rows": [vars(r) for r in rows],
        "extra": report.extra,
    }
    paths["report"] = os.path.join(outdir, "report.json")
    with open(paths["report"], "w", newline="") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")
    return paths


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_report(path: str) -> dict:
    """Load report.json and verify the stored summary against a recomputation
    from the per-instance rows."""
    with open(path) as fh:
        payload = json.load(fh)
    rows = [InstanceRow(**r) for r in payload["rows"]]
    recomputed = summarize(rows, payload.get("references", {}))
    stored = payload["summary"]
    if sorted(stored) != sorted(recomputed):
        raise ValueError("summary keys do not match the per-instance rows")
    for key, entry in recomputed.items():
        for name, val in entry.items():
            sval = stored[key][name]
            if isinstance(val, float):
                if not (math.isnan(val) and isinstance(sval, float) and math.isnan(sval)) \
                        and abs(sval - val) > 1e-12 * max(1.0, abs(val)):
                    raise ValueError(f"summary entry {key}.{name} not recomputable")
            elif sval != val:
                raise ValueError(f"summary entry {key}.{name} not recomputable")
    cfg = config_from_dict(payload["config"])
    if cfg.sha256() != payload["config_sha256"]:
        raise ValueError("config hash mismatch")
    payload["_rows"] = rows
    return payload
