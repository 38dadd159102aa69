"""Batch figure rendering: `ncqf-plots render spec.json out.png`.

The spec document holds {"kind", "inputs", "style"}; kinds are timeseries,
spectrum, histogram, sweep, and matrix_heatmap.  Exit codes: 0 success,
2 schema/validation error (one JSON diagnostic on stderr).
"""

import argparse
import json
import sys

from .figures import FigureSpec, SchemaError, plot


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ncqf-plots",
                                     description="figures from ncqfsim outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render a figure spec")
    render.add_argument("spec", help="path to a figure-spec JSON document")
    render.add_argument("out", help="output image path (.png or .svg)")
    args = parser.parse_args(argv)

    try:
        spec = FigureSpec.from_json(args.spec)
        return plot(spec, args.out)
    except SchemaError as exc:
        print(json.dumps({"error": {"type": "schema", "message": str(exc),
                                    "path": exc.path, "field": exc.fieldname}}),
              file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": {"type": "io", "message": str(exc)}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
