"""Rebuild the bundled QM9 sample archive in the public ``dsgdb9nsd_*.xyz`` layout.

The geometries and properties come from the ``qm9pack`` wheel on PyPI, which
ships the 130,831 converged QM9 molecules as CSV.  The wheel is fetched with
``pip download`` unless a local path is given.

    python scripts/make_qm9_sample.py --count 6000 --seed 0 --out data/qm9_sample.tar.gz
"""

import argparse
import ast
import io
import subprocess
import sys
import tarfile
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import pandas as pd

PROPERTY_COLUMNS = [
    "RotA_GHz", "RotB_GHz", "RotC_GHz", "Dipole_debye", "Polarizability_bohr3",
    "HOMO_au", "LUMO_au", "HOMO_LUMO_gap_au", "R2_bohr2", "ZPVE_au",
    "InternalEnergy_0K_au", "InternalEnergy_298K_au", "Enthalphy_298K_au",
    "GibbsFreeEnergy_298K_au", "Heatcapacity_Cv_cal_mol_K",
]


def fetch_wheel(dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "qm9pack==1.0.3", "-d", str(dest)],
        check=True,
    )
    return next(Path(dest).glob("qm9pack-*.whl"))


def load_frame(wheel):
    with zipfile.ZipFile(wheel) as zf:
        parts = [pd.read_csv(zf.open(f"qm9pack/data/qm9_part{i}.csv")) for i in (1, 2, 3)]
    return pd.concat(parts, ignore_index=True).rename(columns={"Index": "gdb_index"})


def to_xyz(row):
    symbols = ast.literal_eval(row.Elements)
    coords = ast.literal_eval(row.XYZ_Ang)
    charges = ast.literal_eval(row.Mulliken_pop)
    freqs = ast.literal_eval(row.Harmonic_Freq_cmi)
    props = "\t".join(repr(float(getattr(row, c))) for c in PROPERTY_COLUMNS)
    lines = [str(len(symbols)), f"gdb {row.gdb_index}\t{props}\t"]
    for s, (x, y, z), q in zip(symbols, coords, charges):
        lines.append(f"{s}\t{x!r}\t{y!r}\t{z!r}\t{q!r}")
    lines.append("\t".join(repr(float(f)) for f in freqs))
    lines.append(f"{row.SMILES}\t{row.SMILES}")
    lines.append(f"{row.InChi}\t{row.InChi}")
    return "\n".join(lines) + "\n"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", type=Path, help="local qm9pack wheel (downloaded if omitted)")
    ap.add_argument("--count", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("data/qm9_sample.tar.gz"))
    ap.add_argument("--single", type=int, action="append", default=[],
                    help="also write dsgdb9nsd_<index>.xyz next to --out")
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        df = load_frame(wheel)

    rng = np.random.default_rng(args.seed)
    rows = np.sort(rng.choice(len(df), size=args.count, replace=False))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with tarfile.open(args.out, "w:gz") as tar:
        for row in df.iloc[rows].itertuples():
            payload = to_xyz(row).encode()
            info = tarfile.TarInfo(row.XYZ_file)
            info.size = len(payload)
            tar.addfile(info, io.BytesIO(payload))
    print(f"wrote {args.count} molecules to {args.out}")

    for index in args.single:
        row = next(df[df.gdb_index == index].itertuples())
        path = args.out.parent / row.XYZ_file
        path.write_text(to_xyz(row))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
