#!/usr/bin/env python3
"""Run every experiment with its reference config into out/.

Equivalent to invoking the `hkf` CLI once per config in scripts/configs/;
pass experiment names to run a subset, e.g. `python scripts/run_all.py
regularity varcoef`.
"""

import glob
import json
import os
import sys

from hkf.cli import main as hkf_main

HERE = os.path.dirname(os.path.abspath(__file__))


def main(argv):
    wanted = set(argv)
    configs = sorted(glob.glob(os.path.join(HERE, "configs", "*.json")))
    rc = 0
    for path in configs:
        name = os.path.splitext(os.path.basename(path))[0]
        if wanted and name not in wanted:
            continue
        experiment = json.load(open(path))["experiment"]
        print(f"== {name} ({experiment})")
        rc |= hkf_main([experiment, "--config", path])
    return rc


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
