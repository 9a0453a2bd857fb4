"""Synthetic trajectories with analytic energies and forces."""

from __future__ import annotations

import numpy as np

from .io import Molecule


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def spring_trajectory(num_frames: int = 100, elements=(6, 8), r0: float = 1.2, k: float = 500.0,
                      amplitude: float = 0.25, seed: int = 0) -> list[Molecule]:
    """Diatomic frames under ``E = k (d - r0)^2 / 2`` (kcal/mol, Å).

    Bond lengths follow a harmonic oscillation sampled at random phases;
    each frame gets a random orientation and centre.  Forces are exact.
    """
    rng = np.random.default_rng(seed)
    z = np.asarray(elements, dtype=np.int64)
    frames = []
    for f in range(num_frames):
        d = r0 + amplitude * np.sin(rng.uniform(0, 2 * np.pi))
        axis = random_rotation(rng)[:, 0]
        centre = rng.uniform(-2, 2, size=3)
        pos = np.stack([centre - 0.5 * d * axis, centre + 0.5 * d * axis])
        energy = 0.5 * k * (d - r0) ** 2
        f0 = k * (d - r0) * axis  # pulls atom 0 toward atom 1 when stretched
        frames.append(Molecule(f"spring_{f:05d}", z, pos, {"energy": float(energy)}, np.stack([f0, -f0])))
    return frames
