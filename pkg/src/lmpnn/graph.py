"""Cutoff-radius molecular graphs, angle triplets and dataset geometry statistics.

Pairs are found by brute force over all O(V^2) atom pairs; QM9 molecules have
at most 29 atoms so no cell list is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autograd import SegmentIndex
from .basis import AngularBasisConfig, RadialBasisConfig, expand_angle_cosine, radial_basis
from .io import Molecule

DEGENERATE_DISTANCE = 1e-6


class DegenerateGeometryError(ValueError):
    pass


@dataclass
class MolecularGraph:
    """Directed cutoff graph with angle triplets.

    Edge ``e`` points ``edge_src[e] -> edge_dst[e]``.  Angle ``a`` joins
    ``angle_edge_a[a] = (i -> j)`` and ``angle_edge_b[a] = (j -> k)`` with
    ``i != k``; its cosine is taken between ``p_i - p_j`` and ``p_k - p_j``.
    A batch of molecules is one graph with ``node_graph`` naming the molecule
    of each node.
    """

    node_z: np.ndarray
    positions: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_dist: np.ndarray
    angle_edge_a: np.ndarray
    angle_edge_b: np.ndarray
    angle_cos: np.ndarray
    cutoff: float
    node_graph: np.ndarray = None
    num_graphs: int = 1
    ids: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.node_graph is None:
            self.node_graph = np.zeros(len(self.node_z), dtype=np.int64)

    @property
    def num_nodes(self) -> int:
        return len(self.node_z)

    @property
    def num_edges(self) -> int:
        return len(self.edge_src)

    @property
    def num_angles(self) -> int:
        return len(self.angle_edge_a)

    @property
    def node_of_edge_dst(self) -> np.ndarray:
        return self.edge_dst

    @property
    def edge_of_angle_target(self) -> np.ndarray:
        return self.angle_edge_b

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.edge_src.tolist(), self.edge_dst.tolist(), self.edge_dist.tolist()))

    @property
    def angles(self) -> list[tuple[int, int, float]]:
        return list(zip(self.angle_edge_a.tolist(), self.angle_edge_b.tolist(), self.angle_cos.tolist()))

    def index(self, name: str) -> SegmentIndex:
        """Cached segment index for ``edge_src``, ``edge_dst``, ``angle_edge_a``,
        ``angle_edge_b`` or ``node_graph``."""
        key = ("index", name)
        if key not in self._cache:
            sizes = {
                "edge_src": self.num_nodes,
                "edge_dst": self.num_nodes,
                "angle_edge_a": self.num_edges,
                "angle_edge_b": self.num_edges,
                "node_graph": self.num_graphs,
            }
            self._cache[key] = SegmentIndex(getattr(self, name), sizes[name])
        return self._cache[key]

    def expansions(self, radial: RadialBasisConfig, angular: AngularBasisConfig):
        """Cached (R [E, n], Q [A, m]) basis expansions."""
        key = (radial, angular)
        if key not in self._cache:
            rbf = radial_basis(radial)(self.edge_dist) if self.num_edges else np.zeros((0, radial.num_functions))
            abf = expand_angle_cosine(self.angle_cos, angular) if self.num_angles else np.zeros((0, angular.num_functions))
            self._cache[key] = (rbf, abf)
        return self._cache[key]

    def to_dict(self, radial: RadialBasisConfig | None = None, angular: AngularBasisConfig | None = None) -> dict:
        out = {
            "ids": list(self.ids),
            "cutoff": self.cutoff,
            "node_z": self.node_z.tolist(),
            "positions": self.positions.tolist(),
            "edge_src": self.edge_src.tolist(),
            "edge_dst": self.edge_dst.tolist(),
            "edge_dist": self.edge_dist.tolist(),
            "angle_edge_a": self.angle_edge_a.tolist(),
            "angle_edge_b": self.angle_edge_b.tolist(),
            "angle_cos": self.angle_cos.tolist(),
        }
        if radial is not None and angular is not None:
            rbf, abf = self.expansions(radial, angular)
            out["radial"] = rbf.tolist()
            out["angular"] = abf.tolist()
        return out


def pair_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_graph(mol: Molecule, cutoff: float = 4.0) -> MolecularGraph:
    """Connect every ordered atom pair closer than ``cutoff`` (strict)."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    pos = mol.positions
    dist = pair_distances(pos)
    n = mol.num_atoms
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(dist[off_diag] < DEGENERATE_DISTANCE):
        i, j = np.argwhere((dist < DEGENERATE_DISTANCE) & off_diag)[0]
        raise DegenerateGeometryError(f"molecule {mol.id}: atoms {i} and {j} coincide")
    src, dst = np.nonzero((dist < cutoff) & off_diag)  # row-major: sorted by (src, dst)
    a, b, cos = enumerate_angles_arrays(pos, src, dst)
    return MolecularGraph(
        node_z=mol.atomic_numbers.copy(),
        positions=pos.copy(),
        edge_src=src.astype(np.int64),
        edge_dst=dst.astype(np.int64),
        edge_dist=dist[src, dst],
        angle_edge_a=a,
        angle_edge_b=b,
        angle_cos=cos,
        cutoff=float(cutoff),
        ids=(mol.id,),
    )


def angle_pairs(src: np.ndarray, dst: np.ndarray, num_nodes: int | None = None):
    """All (i->j, j->k) directed-edge pairs with i != k, grouped by the second edge."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    num_nodes = num_nodes or int(max(src.max(), dst.max())) + 1
    by_dst = np.argsort(dst, kind="stable")
    indeg = np.bincount(dst, minlength=num_nodes)
    start = np.concatenate([[0], np.cumsum(indeg)[:-1]])
    n_in = indeg[src]  # incoming edges at the pivot of each outgoing edge b
    b = np.repeat(np.arange(len(src)), n_in)
    offset = np.arange(len(b)) - np.repeat(np.cumsum(n_in) - n_in, n_in)
    a = by_dst[np.repeat(start[src], n_in) + offset]
    keep = src[a] != dst[b]
    return a[keep], b[keep]


def angle_cosines(positions: np.ndarray, src, dst, a, b) -> np.ndarray:
    v1 = positions[src[a]] - positions[dst[a]]  # p_i - p_j
    v2 = positions[dst[b]] - positions[src[b]]  # p_k - p_j
    num = np.einsum("ij,ij->i", v1, v2)
    den = np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1)
    return np.clip(num / den, -1.0, 1.0)


def enumerate_angles_arrays(positions, src, dst):
    a, b = angle_pairs(src, dst, len(positions))
    return a, b, angle_cosines(positions, src, dst, a, b)


def enumerate_angles(graph: MolecularGraph) -> list[tuple[int, int, float]]:
    a, b, cos = enumerate_angles_arrays(graph.positions, graph.edge_src, graph.edge_dst)
    return list(zip(a.tolist(), b.tolist(), cos.tolist()))


def batch_graphs(graphs: Sequence[MolecularGraph]) -> MolecularGraph:
    """Concatenate graphs into one disconnected graph with offset indices."""
    if len(graphs) == 1 and graphs[0].num_graphs == 1:
        return graphs[0]
    node_off = np.cumsum([0] + [g.num_nodes for g in graphs[:-1]])
    edge_off = np.cumsum([0] + [g.num_edges for g in graphs[:-1]])
    cutoffs = {g.cutoff for g in graphs}
    if len(cutoffs) != 1:
        raise ValueError("cannot batch graphs built with different cutoffs")
    out = MolecularGraph(
        node_z=np.concatenate([g.node_z for g in graphs]),
        positions=np.concatenate([g.positions for g in graphs]),
        edge_src=np.concatenate([g.edge_src + o for g, o in zip(graphs, node_off)]),
        edge_dst=np.concatenate([g.edge_dst + o for g, o in zip(graphs, node_off)]),
        edge_dist=np.concatenate([g.edge_dist for g in graphs]),
        angle_edge_a=np.concatenate([g.angle_edge_a + o for g, o in zip(graphs, edge_off)]),
        angle_edge_b=np.concatenate([g.angle_edge_b + o for g, o in zip(graphs, edge_off)]),
        angle_cos=np.concatenate([g.angle_cos for g in graphs]),
        cutoff=cutoffs.pop(),
        node_graph=np.concatenate([np.full(g.num_nodes, k, dtype=np.int64) for k, g in enumerate(graphs)]),
        num_graphs=len(graphs),
        ids=tuple(i for g in graphs for i in g.ids),
    )
    # reuse cached expansions so batching does not re-evaluate the bases
    keys = set.intersection(*(set(g._cache) for g in graphs))
    for key in keys:
        if key[0] == "index":
            continue
        out._cache[key] = (
            np.concatenate([g._cache[key][0] for g in graphs]),
            np.concatenate([g._cache[key][1] for g in graphs]),
        )
    return out


@dataclass
class GeometryStats:
    mean_pair_distance: float
    fraction_within: dict
    pair_count: int

    def to_dict(self) -> dict:
        return {
            "mean_pair_distance": self.mean_pair_distance,
            "fraction_within": {str(k): v for k, v in self.fraction_within.items()},
            "pair_count": self.pair_count,
        }


def geometry_stats(dataset: Iterable[Molecule], cutoffs: Sequence[float] = (4.0, 5.0, 10.0)) -> GeometryStats:
    """Pool all intra-molecular unordered atom-pair distances."""
    chunks = []
    for mol in dataset:
        d = pair_distances(mol.positions)
        chunks.append(d[np.triu_indices(mol.num_atoms, 1)])
    if not chunks:
        raise ValueError("geometry_stats needs at least one molecule")
    d = np.concatenate(chunks)
    if len(d) == 0:
        return GeometryStats(float("nan"), {float(c): float("nan") for c in cutoffs}, 0)
    d.sort()
    fractions = {float(c): float(np.searchsorted(d, c, side="left") / len(d)) for c in cutoffs}
    return GeometryStats(float(d.mean()), fractions, int(len(d)))


def representation_bound(num_atoms: int) -> int:
    """Upper bound on node + pair + triple representations of a ``num_atoms`` graph."""
    v = int(num_atoms)
    if v < 1:
        raise ValueError("num_atoms must be >= 1")
    return v + v * (v - 1) // 2 + v * (v - 1) * (v - 2) // 6
