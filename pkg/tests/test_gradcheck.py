import numpy as np
import pytest

from lmpnn.gradcheck import check_model, numeric_gradient, random_molecule, relative_error
from lmpnn.model import ModelConfig

SMALL = ModelConfig(num_radial=5, num_angular=5, hidden=12, angle_width=6, num_single_blocks=2,
                    num_output_blocks=3, num_interaction_blocks=2)


def test_relative_error_floor():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)
    # tiny values are compared against the floor, not each other
    assert relative_error(1e-9, 2e-9, floor=1e-5) == pytest.approx(1e-4)


def test_numeric_gradient_restores_input():
    x = np.array([0.3, -1.2, 2.0])
    ref = x.copy()
    g = numeric_gradient(lambda: float(np.sum(np.sin(x))), x)
    assert np.array_equal(x, ref)
    assert np.allclose(g, np.cos(ref), atol=1e-9)


def test_random_molecule_is_well_separated():
    mol = random_molecule(5, seed=3)
    d = np.linalg.norm(mol.positions[:, None] - mol.positions[None], axis=-1)
    off = d[~np.eye(5, dtype=bool)]
    assert off.min() >= 0.9 and d.max() <= 3.5 + 1e-12
    assert random_molecule(5, seed=3).positions.tolist() == mol.positions.tolist()


@pytest.mark.parametrize("atoms", [3, 4, 5])
def test_small_model_passes(atoms):
    rep = check_model(random_molecule(atoms, seed=atoms), SMALL, seed=atoms, samples_per_tensor=0)
    assert rep.passed(1e-4), rep.worst[:3]
    assert rep.force_sum < 1e-8


def test_detects_a_wrong_gradient(monkeypatch):
    from lmpnn import autograd

    real = autograd._ssp_grad
    monkeypatch.setattr(autograd, "_ssp_grad", lambda g, out: 1.01 * real(g, out))
    rep = check_model(random_molecule(3, seed=0), SMALL, seed=0)
    assert not rep.passed(1e-4)
