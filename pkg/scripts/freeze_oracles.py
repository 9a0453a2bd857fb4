"""Regenerate tests/data/frozen_oracles.json from the independent test oracles.

Run from the repository root:  python3 scripts/freeze_oracles.py
The frozen file is committed; tests compare the package against it.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402

LEGENDRE_X = [-1.0, -0.7, -0.3, 0.0, 0.25, 0.5, 0.9, 1.0]
RATIONAL_X = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
MOLECULE = [[0.0, 0.0, 0.0], [1.09, 0.0, 0.0], [-0.36, 1.03, 0.0], [-0.36, -0.51, 0.89], [3.9, 0.2, 0.1]]


def main():
    edges = oracles.brute_force_edges(MOLECULE, 4.0)
    frozen = {
        "legendre": {str(n): [float(oracles.legendre_explicit(n, x)) for x in LEGENDRE_X] for n in range(13)},
        "legendre_x": LEGENDRE_X,
        "rational": {str(n): [oracles.legendre_rational_oracle(n, x) for x in RATIONAL_X] for n in range(13)},
        "rational_x": RATIONAL_X,
        "molecule": MOLECULE,
        "edges": edges,
        "angles": oracles.brute_force_angles(MOLECULE, edges),
        "adam": {
            "grads": [0.5, -0.2, 0.1, 1.0],
            "lr": 1e-3,
            "p0": 0.3,
            "trace": oracles.adam_scalar_trace(0.3, [0.5, -0.2, 0.1, 1.0], 1e-3),
        },
    }
    out = ROOT / "tests" / "data" / "frozen_oracles.json"
    out.write_text(json.dumps(frozen, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
