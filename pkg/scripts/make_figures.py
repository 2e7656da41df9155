#!/usr/bin/env python3
"""Render the standard figures from completed runs in out/.

Needs the hkf-plot package (pip install -e plots) and the CSV outputs of
scripts/run_all.py.
"""

import json
import os
import sys
import tempfile

from hkf_plot.cli import main as plot_main

FIGURES = [
    {"kind": "loss-curve", "input": "out/regularity/loss_curve.csv",
     "out": "out/figures/regularity_losses.png", "yscale": "log",
     "title": "regularity loss curves"},
    {"kind": "histogram", "input": "out/regularity/estimates.csv",
     "out": "out/figures/regularity_hist.png", "bounds": [0.6, 10.0],
     "param_name": "s", "title": "regularity estimates"},
    {"kind": "histogram", "input": "out/varcoef/estimates.csv",
     "out": "out/figures/varcoef_hist.png", "bounds": [0.6, 10.0],
     "param_name": "s", "title": "variable-coefficient estimates"},
    {"kind": "histogram", "input": "out/discontinuity/estimates.csv",
     "out": "out/figures/discontinuity_hist.png", "bounds": [0.3, 0.7],
     "param_name": "theta", "title": "breakpoint estimates"},
    {"kind": "error-vs-q", "input": "out/l2-bias/l2curve.csv",
     "out": "out/figures/l2_error.png", "title": "generalization error"},
    {"kind": "loss-curve", "input": "out/deterministic/loss_curve.csv",
     "out": "out/figures/deterministic_losses.png", "yscale": "log",
     "title": "deterministic truth loss curves"},
]


def main():
    os.makedirs("out/figures", exist_ok=True)
    rc = 0
    for fig in FIGURES:
        if not os.path.exists(fig["input"]):
            print(f"skipping {fig['out']}: {fig['input']} not found")
            continue
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump(fig, fh)
            spec = fh.name
        rc |= plot_main(["--spec", spec])
        os.unlink(spec)
    return rc


if __name__ == "__main__":
    sys.exit(main())
