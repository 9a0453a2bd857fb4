import io
import tarfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmpnn.constants import QM9_TARGETS
from lmpnn.io import (
    AtomCountError,
    CoordinateError,
    MissingPropertyError,
    Molecule,
    ParseError,
    UnknownElementError,
    convert_energy,
    format_trajectory,
    format_xyz,
    iter_qm9,
    load_exclusions,
    load_qm9,
    parse_extended_xyz,
    parse_trajectory,
    read_xyz,
    split_by_counts,
    split_dataset,
)

DATA = Path(__file__).parent / "data"
METHANE = DATA / "dsgdb9nsd_000001.xyz"


def test_minimal_plain_file():
    mol = parse_extended_xyz("1\n...\nH 0.0 0.0 0.0 0.0\n", mode="plain")
    assert mol.num_atoms == 1
    assert mol.atomic_numbers.tolist() == [1]
    assert mol.positions.tolist() == [[0.0, 0.0, 0.0]]


def test_unknown_element_names_line():
    with pytest.raises(UnknownElementError) as err:
        parse_extended_xyz("2\ncomment\nH 0 0 0\nX 0 0 0\n", mode="plain")
    assert err.value.lineno == 4
    assert "line 4" in str(err.value)


def test_errors_are_distinct():
    cases = [
        ("two\nc\nH 0 0 0\n", "plain", AtomCountError),
        ("2\nc\nH 0 0 0\n", "plain", AtomCountError),
        ("1\nc\nH 0 zero 0\n", "plain", CoordinateError),
        ("1\ngdb 1\t1.0\t2.0\nH 0 0 0 0\n", "qm9", MissingPropertyError),
        ("1\nc\nCl 0 0 0\n", "plain", UnknownElementError),
    ]
    kinds = set()
    for text, mode, exc in cases:
        with pytest.raises(exc) as err:
            parse_extended_xyz(text, mode)
        assert isinstance(err.value, ParseError)
        assert err.value.lineno >= 1
        kinds.add(exc)
    assert len(kinds) == 4


def test_md_whitelist_rejects_nitrogen():
    with pytest.raises(UnknownElementError):
        parse_extended_xyz("1\nenergy=0.0\nN 0 0 0\n", mode="md")


def test_methane_record():
    mol = read_xyz(METHANE)
    assert mol.id == "dsgdb9nsd_000001"
    assert mol.num_atoms == 5
    assert mol.atomic_numbers.tolist() == [6, 1, 1, 1, 1]
    assert mol.symbols == ["C", "H", "H", "H", "H"]
    assert set(mol.targets) == set(QM9_TARGETS)
    assert mol.targets["u0"] == pytest.approx(-40.47893)
    assert mol.targets["homo"] == pytest.approx(-0.3877)
    assert mol.positions[0] == pytest.approx([-0.0126981359, 1.0858041578, 0.0080009958])


def test_mathematica_exponent_and_windows_newlines():
    text = METHANE.read_text().replace("0.0080009958", "8.0009958*^-3").replace("\n", "\r\n")
    mol = parse_extended_xyz(text)
    assert mol.positions[0, 2] == pytest.approx(0.0080009958)


@pytest.mark.parametrize("mode", ["plain", "qm9"])
def test_round_trip(mode):
    mol = read_xyz(METHANE)
    back = parse_extended_xyz(format_xyz(mol, mode), mode)
    assert back.symbols == mol.symbols
    assert np.max(np.abs(back.positions - mol.positions)) <= 1e-12
    if mode == "qm9":
        assert back.id == mol.id
        assert back.targets == mol.targets


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.sampled_from(["H", "C", "N", "O", "F"]), min_size=1, max_size=12),
    st.integers(0, 2**31 - 1),
)
def test_round_trip_property(symbols, seed):
    rng = np.random.default_rng(seed)
    pos = rng.normal(scale=3.0, size=(len(symbols), 3))
    z = [{"H": 1, "C": 6, "N": 7, "O": 8, "F": 9}[s] for s in symbols]
    mol = Molecule("m", z, pos)
    back = parse_extended_xyz(format_xyz(mol), "plain")
    assert back.symbols == symbols
    assert np.max(np.abs(back.positions - pos)) <= 1e-12


def test_trajectory_round_trip_with_forces():
    frames = [
        Molecule("a", [6, 8], [[0, 0, 0], [1.2, 0, 0]], {"energy": -1.5}, [[0.1, 0, 0], [-0.1, 0, 0]]),
        Molecule("b", [6, 8], [[0, 0, 0], [1.3, 0, 0]], {"energy": 2.0}, [[-0.2, 0, 0], [0.2, 0, 0]]),
    ]
    back = parse_trajectory(format_trajectory(frames), prefix="t")
    assert [f.id for f in back] == ["t_000000", "t_000001"]
    assert [f.targets["energy"] for f in back] == [-1.5, 2.0]
    assert np.allclose(back[1].forces, frames[1].forces)


def test_trajectory_without_forces_and_missing_energy():
    frames = parse_trajectory("2\nenergy=0.5 step=3\nC 0 0 0\nO 1 0 0\n")
    assert frames[0].forces is None
    with pytest.raises(MissingPropertyError):
        parse_trajectory("2\nstep=3\nC 0 0 0\nO 1 0 0\n")


def test_molecule_invariants():
    with pytest.raises(ValueError):
        Molecule("m", [1, 1], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Molecule("m", [1], [[0, np.inf, 0]])
    mol = Molecule("m", [1, 8], [[0, 0, 0], [0, 0, 1]], {"energy": 1.0})
    assert Molecule.from_dict(mol.to_dict()).to_dict() == mol.to_dict()


def _tar_of(paths, dest):
    with tarfile.open(dest, "w:gz") as tar:
        for p in paths:
            tar.add(p, arcname=Path(p).name)
    return dest


def test_iter_qm9_directory_tar_and_exclusions(tmp_path):
    second = tmp_path / "dsgdb9nsd_000002.xyz"
    second.write_text(METHANE.read_text().replace("gdb 1\t", "gdb 2\t"))
    (tmp_path / "dsgdb9nsd_000001.xyz").write_text(METHANE.read_text())
    ids = [m.id for m in iter_qm9(tmp_path)]
    assert ids == ["dsgdb9nsd_000001", "dsgdb9nsd_000002"]

    tar = _tar_of(sorted(tmp_path.glob("*.xyz")), tmp_path / "q.tar.gz")
    assert [m.id for m in load_qm9(tar)] == ids
    assert len(load_qm9(tar, limit=1)) == 1

    excl = tmp_path / "excluded.txt"
    excl.write_text("Index  GDB17\n-----\n     2  ignored\n")
    assert load_exclusions(excl) == {"dsgdb9nsd_000002"}
    assert [m.id for m in load_qm9(tmp_path, exclude=load_exclusions(excl))] == ["dsgdb9nsd_000001"]


def test_energy_conversion():
    assert convert_energy(0.0, "Ha", "eV") == 0.0
    assert convert_energy(1.0, "Ha", "eV") == 27.211386245988
    assert convert_energy(1.0, "eV", "meV") == pytest.approx(1000.0, rel=1e-15)
    assert convert_energy(1.0, "eV", "kcal_per_mol") == pytest.approx(23.060547830619, rel=1e-15)
    via = convert_energy(convert_energy(0.37, "Ha", "eV"), "eV", "meV")
    assert via == pytest.approx(convert_energy(0.37, "Ha", "meV"), rel=1e-9)
    with pytest.raises(ValueError):
        convert_energy(1.0, "Ha", "furlong")


def test_hartree_constant_against_codata():
    # CODATA 2018: E_h = 4.3597447222071e-18 J, e = 1.602176634e-19 C
    assert 4.3597447222071e-18 / 1.602176634e-19 == pytest.approx(27.211386245988, rel=1e-12)
    # 1 kcal/mol = 4184 J / N_A
    ev_per_kcal_mol = 4184.0 / 6.02214076e23 / 1.602176634e-19
    assert 1 / ev_per_kcal_mol == pytest.approx(23.060547830619, rel=1e-10)


def test_split_sizes_and_determinism():
    ids = [f"m{i}" for i in range(10)]
    s = split_dataset(ids, seed=7)
    assert s.sizes() == (8, 1, 1)
    assert split_dataset([f"m{i}" for i in range(12)], seed=7).sizes() == (10, 1, 1)
    again = split_dataset(ids, seed=7)
    assert again == s
    union = set(s.train_ids) | set(s.valid_ids) | set(s.test_ids)
    assert union == set(ids)
    assert len(union) == 10
    assert split_dataset(ids, seed=8) != s


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset([], seed=0)
    with pytest.raises(ValueError):
        split_dataset(["a", "a"], seed=0)
    with pytest.raises(ValueError):
        split_dataset(["a", "b"], fractions=(0.5, 0.4, 0.2))


def test_split_by_counts():
    ids = [f"f{i}" for i in range(30)]
    s = split_by_counts(ids, n_train=20, n_test=5, n_valid=4, seed=1)
    assert s.sizes() == (16, 4, 5)
    assert not set(s.valid_ids) & set(s.train_ids)
    with pytest.raises(ValueError):
        split_by_counts(ids, n_train=30, n_test=5)
