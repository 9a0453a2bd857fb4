"""Central finite-difference audit of model gradients and forces."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .graph import build_graph, pair_distances
from .io import Molecule
from .model import ModelConfig, forward, init_params, predict_forces

# gradients below this magnitude are compared absolutely; central differences
# of an O(1) output carry roughly 1e-10 of rounding and truncation noise
DEFAULT_FLOOR = 1e-5


def relative_error(analytic, numeric, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``x`` (perturbed in place).

    Returns the gradient at ``indices`` (flat), or the full gradient array.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out.append((up - down) / (2 * eps))
    out = np.array(out, dtype=float)
    return out.reshape(x.shape) if indices is None else out


def random_molecule(num_atoms: int = 4, seed: int = 0, elements=(1, 6, 7, 8),
                    min_distance: float = 0.9, max_distance: float = 3.5) -> Molecule:
    """Random small molecule with every pair between ``min_distance`` and ``max_distance``.

    Keeping all pairs well inside the default cutoff keeps the graph fixed
    under finite-difference perturbations.
    """
    rng = np.random.default_rng(seed)
    for _ in range(10_000):
        pos = rng.uniform(-1.4, 1.4, size=(num_atoms, 3))
        d = pair_distances(pos)[np.triu_indices(num_atoms, 1)]
        if num_atoms < 2 or (d.min() > min_distance and d.max() < max_distance):
            z = rng.choice(np.asarray(elements), size=num_atoms)
            return Molecule(f"random_{seed}", z, pos)
    raise RuntimeError("could not place atoms")


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_param_rel_error: float
    max_force_rel_error: float
    force_sum: float
    checked_entries: int
    eps: float
    floor: float
    worst: list = field(default_factory=list)

    def passed(self, tol: float = 1e-4, force_sum_tol: float = 1e-8) -> bool:
        return self.max_rel_error < tol and self.force_sum < force_sum_tol

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_indices(grad: np.ndarray, k: int, rng) -> list[int]:
    flat = np.abs(grad.reshape(-1))
    if k <= 0 or k >= flat.size:
        return list(range(flat.size))
    picks = {int(np.argmax(flat))}
    picks.update(int(i) for i in rng.choice(flat.size, size=min(k - 1, flat.size), replace=False))
    return sorted(picks)[:k]


def check_model(mol: Molecule | None = None, config: ModelConfig | None = None, seed: int = 0,
                eps: float = 1e-5, samples_per_tensor: int = 3, floor: float = DEFAULT_FLOOR) -> GradCheckReport:
    """Compare reverse-mode gradients of ``y_hat`` with central differences.

    Every parameter tensor is audited at ``samples_per_tensor`` entries (its
    largest-gradient entry plus random ones; 0 means every entry), and every
    position coordinate is audited through the predicted forces.
    """
    config = config or ModelConfig()
    mol = mol or random_molecule(4, seed)
    params = init_params(config, seed)
    graph = build_graph(mol, config.cutoff)
    rng = np.random.default_rng(seed)

    out = forward(graph, params, config, "eval")
    grads = ag.backward(ag.sum_(out.y_hat))
    by_name = {name: grads.get(t, np.zeros_like(t.value)) for name, t in params.tensors.items()}
    frozen = params.frozen()  # shares the arrays, so in-place perturbations are seen

    def energy():
        return float(forward(graph, frozen, config, "eval").y_hat.value.sum())

    worst, param_err, n = [], 0.0, 0
    for name, t in params.tensors.items():
        idx = _sample_indices(by_name[name], samples_per_tensor, rng)
        num = numeric_gradient(energy, t.value, eps, idx)
        ana = by_name[name].reshape(-1)[idx]
        err = relative_error(ana, num, floor)
        n += len(idx)
        j = int(np.argmax(err))
        param_err = max(param_err, float(err[j]))
        worst.append({"name": name, "index": int(idx[j]), "analytic": float(ana[j]),
                      "numeric": float(num[j]), "rel_error": float(err[j])})

    _, forces = predict_forces(graph, params, config)
    pos = mol.positions.copy()

    def energy_at():
        g = build_graph(Molecule(mol.id, mol.atomic_numbers, pos), config.cutoff)
        return float(forward(g, frozen, config, "eval").y_hat.value.sum())

    num_forces = -numeric_gradient(energy_at, pos, eps)
    force_err = relative_error(forces, num_forces, floor)
    n += force_err.size
    j = int(np.argmax(force_err))
    worst.append({"name": "positions", "index": j, "analytic": float(forces.reshape(-1)[j]),
                  "numeric": float(num_forces.reshape(-1)[j]), "rel_error": float(force_err.reshape(-1)[j])})
    worst.sort(key=lambda w: -w["rel_error"])
    force_max = float(force_err.max())
    return GradCheckReport(
        max_rel_error=max(param_err, force_max),
        max_param_rel_error=param_err,
        max_force_rel_error=force_max,
        force_sum=float(np.abs(forces.sum(axis=0)).max()),
        checked_entries=n,
        eps=eps,
        floor=floor,
        worst=worst[:10],
    )
