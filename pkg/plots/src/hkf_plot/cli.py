"""Command line entry point: ``hkf-plot --spec figure.json``."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaMismatchError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hkf-plot", description="render a figure from experiment CSVs")
    parser.add_argument("--spec", required=True,
                        help="JSON figure specification")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        out = render(spec)
    except (SchemaMismatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
