"""Molecule ingestion: QM9 extended-XYZ records, MD trajectories, units and splits."""

from __future__ import annotations

import math
import re
import tarfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .constants import (
    ELEMENTS_BY_MODE,
    ENERGY_UNITS,
    QM9_PROPERTY_FIELDS,
    QM9_TARGETS,
    SYMBOL_TO_Z,
    Z_TO_SYMBOL,
)


class ParseError(ValueError):
    """Malformed molecule text. ``lineno`` is 1-based within the parsed block."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class AtomCountError(ParseError):
    pass


class UnknownElementError(ParseError):
    pass


class CoordinateError(ParseError):
    pass


class MissingPropertyError(ParseError):
    pass


@dataclass
class Molecule:
    id: str
    atomic_numbers: np.ndarray
    positions: np.ndarray
    targets: dict = field(default_factory=dict)
    forces: np.ndarray | None = None

    def __post_init__(self):
        self.atomic_numbers = np.asarray(self.atomic_numbers, dtype=np.int64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.atomic_numbers) != len(self.positions):
            raise ValueError("atomic_numbers and positions differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError(f"molecule {self.id}: non-finite coordinates")
        if self.forces is not None:
            self.forces = np.asarray(self.forces, dtype=np.float64).reshape(-1, 3)

    @property
    def num_atoms(self) -> int:
        return len(self.atomic_numbers)

    @property
    def symbols(self) -> list[str]:
        return [Z_TO_SYMBOL[int(z)] for z in self.atomic_numbers]

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "atomic_numbers": self.atomic_numbers.tolist(),
            "positions": self.positions.tolist(),
            "targets": dict(self.targets),
        }
        if self.forces is not None:
            out["forces"] = self.forces.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Molecule":
        return cls(d["id"], d["atomic_numbers"], d["positions"], dict(d.get("targets", {})), d.get("forces"))


def _number(token: str, lineno: int, what: str = "coordinate") -> float:
    # QM9 writes some exponents in Mathematica style, e.g. 1.2*^-6
    try:
        value = float(token.replace("*^", "e"))
    except ValueError:
        raise CoordinateError(f"non-numeric {what} {token!r}", lineno) from None
    if not math.isfinite(value):
        raise CoordinateError(f"non-finite {what} {token!r}", lineno)
    return value


def _split_lines(text: str) -> list[str]:
    return text.replace("\r\n", "\n").replace("\r", "\n").split("\n")


def _atom_count(line: str, lineno: int) -> int:
    try:
        n = int(line.strip())
    except ValueError:
        raise AtomCountError(f"malformed atom count {line.strip()!r}", lineno) from None
    if n < 1:
        raise AtomCountError(f"atom count must be positive, got {n}", lineno)
    return n


def _atom_line(line: str, lineno: int, allowed: frozenset, with_forces: bool = False):
    parts = line.split()
    if len(parts) < 4:
        raise CoordinateError(f"expected 'symbol x y z', got {line.strip()!r}", lineno)
    symbol = parts[0]
    z = SYMBOL_TO_Z.get(symbol)
    if z is None or z not in allowed:
        raise UnknownElementError(f"unknown element {symbol!r}", lineno)
    xyz = [_number(t, lineno) for t in parts[1:4]]
    force = None
    if with_forces and len(parts) >= 7:
        force = [_number(t, lineno, "force") for t in parts[4:7]]
    return z, xyz, force


def _parse_qm9_properties(line: str, lineno: int) -> tuple[str, dict]:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "gdb":
        raise MissingPropertyError("expected 'gdb <index>' property record", lineno)
    try:
        index = int(parts[1])
    except ValueError:
        raise MissingPropertyError(f"bad molecule index {parts[1]!r}", lineno) from None
    values = parts[2:]
    if len(values) < len(QM9_PROPERTY_FIELDS):
        missing = QM9_PROPERTY_FIELDS[len(values)]
        raise MissingPropertyError(f"missing property field {missing!r}", lineno)
    props = {
        name: _number(tok, lineno, f"property {name!r}")
        for name, tok in zip(QM9_PROPERTY_FIELDS, values)
    }
    return f"dsgdb9nsd_{index:06d}", {k: props[k] for k in QM9_TARGETS}


def parse_extended_xyz(text: str, mode: str = "qm9", id: str | None = None) -> Molecule:
    """Parse one molecule block.

    ``mode="qm9"`` expects the public QM9 layout: atom count, a tab separated
    ``gdb`` property record and ``symbol x y z charge`` atom lines; trailing
    frequency/SMILES/InChI lines are ignored.  ``mode="plain"`` treats line 2
    as a free comment; ``mode="md"`` reads one trajectory frame (see
    :func:`parse_trajectory`).
    """
    if mode not in ELEMENTS_BY_MODE:
        raise ValueError(f"unknown parse mode {mode!r}")
    lines = _split_lines(text)
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise AtomCountError("empty input", 1)
    n = _atom_count(lines[0], 1)
    if len(lines) < 2:
        raise MissingPropertyError("missing comment/property line", 2)
    mol, _ = _parse_block(lines, 0, n, mode, id)
    return mol


def _parse_block(lines: list[str], start: int, n: int, mode: str, id: str | None):
    allowed = ELEMENTS_BY_MODE[mode]
    comment = lines[start + 1] if start + 1 < len(lines) else ""
    targets: dict = {}
    mol_id = id
    if mode == "qm9":
        qm9_id, targets = _parse_qm9_properties(comment, start + 2)
        mol_id = mol_id or qm9_id
    elif mode == "md":
        targets = _parse_comment_fields(comment, start + 2)
    zs, xyzs, forces = [], [], []
    for k in range(n):
        lineno = start + 3 + k
        if start + 2 + k >= len(lines) or not lines[start + 2 + k].strip():
            raise AtomCountError(f"expected {n} atom lines, found {k}", lineno)
        z, xyz, f = _atom_line(lines[start + 2 + k], lineno, allowed, with_forces=mode == "md")
        zs.append(z)
        xyzs.append(xyz)
        forces.append(f)
    have_forces = mode == "md" and all(f is not None for f in forces)
    mol = Molecule(
        id=mol_id or "mol",
        atomic_numbers=zs,
        positions=xyzs,
        targets=targets,
        forces=np.array(forces) if have_forces else None,
    )
    return mol, start + 2 + n


_FIELD_RE = re.compile(r"(\w+)\s*=\s*(\S+)")


def _parse_comment_fields(comment: str, lineno: int) -> dict:
    fields = dict(_FIELD_RE.findall(comment))
    if "energy" not in fields:
        raise MissingPropertyError("frame comment lacks 'energy=<float>'", lineno)
    return {"energy": _number(fields["energy"], lineno, "energy")}


def parse_trajectory(text: str, prefix: str = "frame") -> list[Molecule]:
    """Parse concatenated MD frames.

    Each frame is an extended-XYZ block whose comment carries ``energy=<float>``
    (kcal/mol); atom lines may append ``fx fy fz`` (kcal/mol/Å).
    """
    lines = _split_lines(text)
    frames = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        n = _atom_count(lines[i], i + 1)
        mol, i = _parse_block(lines, i, n, "md", f"{prefix}_{len(frames):06d}")
        frames.append(mol)
    return frames


def _num(x) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def format_trajectory(frames: Iterable[Molecule]) -> str:
    out = []
    for mol in frames:
        out.append(str(mol.num_atoms))
        out.append(f"energy={_num(mol.targets['energy'])}")
        for k, (s, p) in enumerate(zip(mol.symbols, mol.positions)):
            row = " ".join([s, *map(_num, p)])
            if mol.forces is not None:
                row += " " + " ".join(map(_num, mol.forces[k]))
            out.append(row)
    return "\n".join(out) + "\n"


def format_xyz(mol: Molecule, mode: str = "plain") -> str:
    """Serialize a molecule; ``parse_extended_xyz(format_xyz(m, mode), mode)`` round-trips."""
    if mode == "qm9":
        index = int(mol.id.rsplit("_", 1)[-1]) if mol.id.rsplit("_", 1)[-1].isdigit() else 0
        props = {k: 0.0 for k in QM9_PROPERTY_FIELDS}
        props.update(mol.targets)
        header = f"gdb {index}\t" + "\t".join(_num(props[k]) for k in QM9_PROPERTY_FIELDS)
    else:
        header = mol.id
    rows = ["\t".join([s, *map(_num, p)]) for s, p in zip(mol.symbols, mol.positions)]
    return "\n".join([str(mol.num_atoms), header, *rows]) + "\n"


def read_xyz(path, mode: str = "qm9") -> Molecule:
    path = Path(path)
    mol = parse_extended_xyz(path.read_text(encoding="utf-8"), mode=mode)
    if mode != "qm9":
        mol.id = path.stem
    return mol


def load_exclusions(path) -> set[str]:
    """Read molecule indices to skip, one per line (first integer token).

    Lines without a leading integer (headers, separators) are ignored, so the
    ``uncharacterized.txt`` list shipped with QM9 can be used as-is.
    """
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        tok = line.split()
        if tok and tok[0].isdigit():
            ids.add(f"dsgdb9nsd_{int(tok[0]):06d}")
    return ids


def iter_qm9(source, exclude: set[str] | None = None) -> Iterator[Molecule]:
    """Yield QM9 molecules from a directory of ``*.xyz`` files or a tar archive."""
    source = Path(source)
    exclude = exclude or set()
    if source.is_dir():
        for path in sorted(source.glob("*.xyz")):
            mol = read_xyz(path, "qm9")
            if mol.id not in exclude:
                yield mol
        return
    with tarfile.open(source) as tar:
        members = sorted((m for m in tar.getmembers() if m.name.endswith(".xyz")), key=lambda m: m.name)
        for m in members:
            text = tar.extractfile(m).read().decode("utf-8")
            mol = parse_extended_xyz(text, "qm9")
            if mol.id not in exclude:
                yield mol


def load_qm9(source, limit: int | None = None, exclude: set[str] | None = None) -> list[Molecule]:
    out = []
    for mol in iter_qm9(source, exclude):
        out.append(mol)
        if limit is not None and len(out) >= limit:
            break
    return out


def convert_energy(value, from_unit: str, to_unit: str):
    try:
        a = ENERGY_UNITS[from_unit]
        b = ENERGY_UNITS[to_unit]
    except KeyError as exc:
        raise ValueError(f"unknown energy unit {exc.args[0]!r}") from None
    return value * (a / b) if a != b else value * 1.0


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple
    valid_ids: tuple
    test_ids: tuple
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_ids), len(self.valid_ids), len(self.test_ids)


def split_dataset(ids: Sequence, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Shuffle ``ids`` with ``seed`` and cut into train/valid/test.

    Valid and test sizes are ``floor(fraction * N)``; the remainder goes to train.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(ids)
    n_valid = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    n_train = n - n_valid - n_test
    return DatasetSplit(
        tuple(shuffled[:n_train]),
        tuple(shuffled[n_train:n_train + n_valid]),
        tuple(shuffled[n_train + n_valid:]),
        seed,
    )


def split_by_counts(ids: Sequence, n_train: int, n_test: int, n_valid: int = 0, seed: int = 0) -> DatasetSplit:
    """Fixed-count split for MD trajectories; validation is carved from the training frames."""
    ids = list(ids)
    if n_train + n_test > len(ids):
        raise ValueError(f"need {n_train + n_test} frames, have {len(ids)}")
    if n_valid >= n_train:
        raise ValueError("validation carve must leave training frames")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    train = shuffled[:n_train]
    test = shuffled[n_train:n_train + n_test]
    return DatasetSplit(tuple(train[n_valid:]), tuple(train[:n_valid]), tuple(test), seed)
