#!/usr/bin/env python3
"""Run the regularization-decomposition and complexity-bound checks.

Two configs: a logistic remainder scan (slope of the second-order residue)
and a gaussian setup whose retentiveness estimate is positive, activating
the Rademacher rows and the generalization bound.
"""
import json
import sys
from pathlib import Path

from langaug.cli import run

CONFIGS = {
    "scan": Path(__file__).parent / "configs" / "theory.json",
    "bound": Path(__file__).parent / "configs" / "theory_bound.json",
}


def main(out_root="runs"):
    for name, config in CONFIGS.items():
        out_dir = Path(out_root) / f"theory_{name}"
        print(f"== verify-theory ({name})")
        code = run("verify-theory", config, out_dir)
        if code != 0:
            return code
        summary = json.loads((out_dir / "theory" / "summary.json").read_text())
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
