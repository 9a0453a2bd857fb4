"""The dual-branch Legendre message-passing network.

Data flow (T interaction blocks, T + 1 output blocks, S single-body blocks)::

    Z, R ─ embedding ─ X ─┬─ single_0 ─ ... ─ single_{S-1} ─ project ─ sum ──── * c_S ─┐
                          │                                                             ├─ y
                          └─ output_0 ─ interaction_0 ─ output_1 ─ ... ─ output_T ─ * c_P ─┘

Each output block emits a per-atom scalar; the passing branch sums all of
them.  Every single-body block, output block and interaction block owns one
trainable scalar gate ``gamma`` on its final dense layer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .basis import AngularBasisConfig, RadialBasisConfig, expand_angle_cosine, radial_basis
from .graph import MolecularGraph

ELEMENTS = (1, 6, 7, 8, 9)
_ELEMENT_ROW = np.full(max(ELEMENTS) + 1, -1, dtype=np.int64)
_ELEMENT_ROW[list(ELEMENTS)] = np.arange(len(ELEMENTS))

GAMMA_GROUPS = ("single", "output", "interaction")


@dataclass(frozen=True)
class ModelConfig:
    num_radial: int = 12
    num_angular: int = 12
    hidden: int = 128
    angle_width: int = 32
    num_single_blocks: int = 6
    num_output_blocks: int = 7
    num_interaction_blocks: int = 6
    cutoff: float = 4.0
    activation: str = "shifted_softplus"
    dropout: float = 0.0
    normalization_grid_points: int = 4096

    def __post_init__(self):
        for name in ("num_radial", "num_angular", "hidden", "angle_width", "num_single_blocks", "num_output_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_output_blocks != self.num_interaction_blocks + 1:
            raise ValueError("output blocks alternate with interaction blocks: need num_output = num_interaction + 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.activation not in ag.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def radial(self) -> RadialBasisConfig:
        return RadialBasisConfig(self.num_radial, self.cutoff, self.normalization_grid_points)

    @property
    def angular(self) -> AngularBasisConfig:
        return AngularBasisConfig(self.num_angular)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_gamma(size, rng: np.random.Generator) -> np.ndarray:
    """Gate initial values: exp of N(0, 0.1^2), slightly right-skewed around 1."""
    return np.exp(rng.normal(0.0, 0.1, size=size))


@dataclass
class ModelParams:
    """Named trainable tensors plus the gamma registry ``{group: [names]}``."""

    tensors: dict
    gammas: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def arrays(self) -> dict:
        return {k: t.value for k, t in self.tensors.items()}

    def gamma_values(self) -> dict:
        return {g: [float(self.tensors[n].value) for n in names] for g, names in self.gammas.items()}

    def frozen(self) -> "ModelParams":
        """Same values, no gradient tracking."""
        return ModelParams({k: Tensor(t.value, name=k) for k, t in self.tensors.items()}, self.gammas)

    def copy(self) -> "ModelParams":
        return ModelParams({k: ag.parameter(t.value.copy(), k) for k, t in self.tensors.items()},
                           {g: list(v) for g, v in self.gammas.items()})

    def load_arrays(self, arrays: dict) -> None:
        for k, t in self.tensors.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"parameter {k!r}: checkpoint shape {arrays[k].shape} != {t.shape}")
            t.value[...] = arrays[k]

    def num_parameters(self) -> int:
        return int(sum(t.value.size for t in self.tensors.values()))


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig = ModelConfig(), seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    F, n, m, Fa = config.hidden, config.num_radial, config.num_angular, config.angle_width
    t: dict = {}
    gammas = {g: [] for g in GAMMA_GROUPS}

    def dense_(name, fan_in, fan_out, bias=True):
        t[f"{name}/W"] = _glorot(rng, fan_in, fan_out)
        if bias:
            t[f"{name}/b"] = np.zeros(fan_out)

    def gate(group, name):
        t[name] = np.array(sample_gamma(None, rng))
        gammas[group].append(name)

    bound = np.sqrt(3.0) / np.sqrt(F)
    t["embedding/table"] = rng.uniform(-bound, bound, size=(len(ELEMENTS), F))
    dense_("embedding/rbf", n, F, bias=False)
    dense_("embedding/mix", 2 * F, F)

    for k in range(config.num_single_blocks):
        dense_(f"single{k}/dense0", F, F)
        dense_(f"single{k}/dense1", F, F)
        gate("single", f"single{k}/gamma")
    dense_("single/project", F, 1)

    for k in range(config.num_output_blocks):
        if k == 0:
            dense_("output0/edge", 2 * F, F)
        dense_(f"output{k}/rbf", n, F, bias=False)
        dense_(f"output{k}/dense0", F, F)
        dense_(f"output{k}/dense1", F, F)
        dense_(f"output{k}/project", F, 1)
        gate("output", f"output{k}/gamma")

    for k in range(config.num_interaction_blocks):
        dense_(f"interaction{k}/source", F, Fa)
        dense_(f"interaction{k}/angle", m, Fa, bias=False)
        dense_(f"interaction{k}/rbf", n, Fa, bias=False)
        dense_(f"interaction{k}/up", Fa, F)
        dense_(f"interaction{k}/self", F, F)
        dense_(f"interaction{k}/post", F, F)
        gate("interaction", f"interaction{k}/gamma")

    t["branch/c_single"] = np.array(sample_gamma(None, rng))
    t["branch/c_passing"] = np.array(sample_gamma(None, rng))
    return ModelParams({k: ag.parameter(v, k) for k, v in t.items()}, gammas)


def element_rows(node_z) -> np.ndarray:
    z = np.asarray(node_z, dtype=np.int64)
    if np.any(z < 0) or np.any(z >= len(_ELEMENT_ROW)) or np.any(_ELEMENT_ROW[np.clip(z, 0, len(_ELEMENT_ROW) - 1)] < 0):
        bad = sorted(set(z.tolist()) - set(ELEMENTS))
        raise ValueError(f"no embedding row for atomic number(s) {bad}")
    return _ELEMENT_ROW[z]


@dataclass
class Features:
    """Per-graph inputs to the network: basis expansions and index arrays."""

    rbf: Tensor  # [E, n]
    abf: Tensor  # [A, m]
    graph: MolecularGraph
    activation: str = "shifted_softplus"


def _geometry_on_tape(graph: MolecularGraph, positions: Tensor, config: ModelConfig) -> Features:
    radial = radial_basis(config.radial)
    vec = ag.gather(positions, graph.index("edge_dst")) - ag.gather(positions, graph.index("edge_src"))  # p_dst - p_src
    d = ag.sqrt(ag.rowwise_dot(vec, vec))
    rbf = ag.elementwise_expand(d, lambda x: radial(x, with_derivative=True))
    if graph.num_angles:
        a, b = graph.index("angle_edge_a"), graph.index("angle_edge_b")
        # edge a = i->j gives p_j - p_i, edge b = j->k gives p_k - p_j
        num = -1.0 * ag.rowwise_dot(ag.gather(vec, a), ag.gather(vec, b))
        cos = ag.clip(num / (ag.gather(d, a) * ag.gather(d, b)), -1.0, 1.0)
        abf = ag.elementwise_expand(cos, lambda c: expand_angle_cosine(c, config.angular, with_derivative=True))
    else:
        abf = Tensor(np.zeros((0, config.num_angular)))
    return Features(rbf, abf, graph, config.activation)


def featurize(graph: MolecularGraph, config: ModelConfig, positions: Tensor | None = None) -> Features:
    if positions is not None:
        return _geometry_on_tape(graph, positions, config)
    rbf, abf = graph.expansions(config.radial, config.angular)
    return Features(Tensor(rbf), Tensor(abf), graph, config.activation)


class _Dropout:
    def __init__(self, rate, training, rng):
        self.rate, self.training, self.rng = rate, training, rng

    def __call__(self, x):
        return ag.dropout(x, self.rate, self.training, self.rng)


def _dense(p, name, x, activation="shifted_softplus"):
    return ag.dense(x, p[f"{name}/W"], p.tensors.get(f"{name}/b"), activation)


def embedding_block(feats: Features, p: ModelParams) -> Tensor:
    g = feats.graph
    emb = ag.gather(p["embedding/table"], element_rows(g.node_z))  # [V, F]
    filt = _dense(p, "embedding/rbf", feats.rbf, "identity")  # [E, F]
    msg = ag.gather(emb, g.index("edge_src")) * filt
    agg = ag.segment_sum(msg, g.index("edge_dst"))
    return _dense(p, "embedding/mix", ag.concat([emb, agg], axis=1), feats.activation)


def single_body_block(k: int, h: Tensor, p: ModelParams, drop=None, activation="shifted_softplus") -> Tensor:
    u = _dense(p, f"single{k}/dense0", h, activation)
    if drop is not None:
        u = drop(u)
    u = _dense(p, f"single{k}/dense1", u, activation)
    return h + ag.scale_by_scalar(u, p[f"single{k}/gamma"])


def output_block(k: int, inputs: Tensor, feats: Features, p: ModelParams, drop=None):
    """Return ``(per-atom contribution [V], edge features carried on [E, F])``.

    Block 0 receives atom features X and lifts them onto edges; later blocks
    receive the edge features produced by the preceding interaction block.
    """
    g = feats.graph
    if k == 0:
        pair = ag.concat([ag.gather(inputs, g.index("edge_src")), ag.gather(inputs, g.index("edge_dst"))], axis=1)
        edges = _dense(p, "output0/edge", pair, feats.activation)
    else:
        edges = inputs
    gated = edges * _dense(p, f"output{k}/rbf", feats.rbf, "identity")
    h = ag.segment_sum(gated, g.index("edge_dst"))
    h = _dense(p, f"output{k}/dense0", h, feats.activation)
    if drop is not None:
        h = drop(h)
    h = _dense(p, f"output{k}/dense1", h, feats.activation)
    out = ag.scale_by_scalar(_dense(p, f"output{k}/project", h, "identity"), p[f"output{k}/gamma"])
    return ag.reshape(out, (g.num_nodes,)), edges


def interaction_block(k: int, edges: Tensor, feats: Features, p: ModelParams) -> Tensor:
    """Refine directed-edge features with the angles arriving at each edge.

    The angle path runs at ``angle_width`` channels (there are roughly ten
    angles per edge) and is projected back to the hidden width after the sum.
    """
    g = feats.graph
    act = feats.activation
    source = _dense(p, f"interaction{k}/source", edges, act)  # edge k->j as a message source
    angle_filter = _dense(p, f"interaction{k}/angle", feats.abf, "identity")  # [A, Fa]
    msg = ag.gather(source, g.index("angle_edge_a")) * angle_filter
    agg = ag.segment_sum(msg, g.index("angle_edge_b"))
    agg = agg * _dense(p, f"interaction{k}/rbf", feats.rbf, "identity")
    h = _dense(p, f"interaction{k}/self", edges, act) + _dense(p, f"interaction{k}/up", agg, act)
    update = ag.scale_by_scalar(_dense(p, f"interaction{k}/post", h, act), p[f"interaction{k}/gamma"])
    return edges + update


@dataclass
class ForwardOutput:
    y_hat: Tensor  # [G]
    single: Tensor  # [G]
    passing: Tensor  # [G]
    atom_single: Tensor | None = None  # [V]
    atom_passing: Tensor | None = None  # [V]


def forward(
    graph: MolecularGraph,
    params: ModelParams,
    config: ModelConfig = ModelConfig(),
    mode: str = "eval",
    positions: Tensor | None = None,
    rng: np.random.Generator | None = None,
) -> ForwardOutput:
    """Predict one scalar per molecule in ``graph``.

    Pass ``positions`` (a tensor over ``graph.positions``) to evaluate the
    geometry inside the recorded computation, which is what force
    prediction differentiates through.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if abs(graph.cutoff - config.cutoff) > 1e-12:
        raise ValueError(f"graph cutoff {graph.cutoff} differs from model cutoff {config.cutoff}")
    drop = None
    if mode == "train" and config.dropout > 0:
        drop = _Dropout(config.dropout, True, rng if rng is not None else np.random.default_rng())
    feats = featurize(graph, config, positions)
    x = embedding_block(feats, params)

    h = x
    for k in range(config.num_single_blocks):
        h = single_body_block(k, h, params, drop, config.activation)
    atom_single = ag.reshape(_dense(params, "single/project", h, "identity"), (graph.num_nodes,))

    atom_passing = None
    edges = x
    for k in range(config.num_output_blocks):
        contrib, edges = output_block(k, edges, feats, params, drop)
        atom_passing = contrib if atom_passing is None else atom_passing + contrib
        if k < config.num_interaction_blocks:
            edges = interaction_block(k, edges, feats, params)

    single = ag.segment_sum(atom_single, graph.index("node_graph"))
    passing = ag.segment_sum(atom_passing, graph.index("node_graph"))
    y = ag.scale_by_scalar(single, params["branch/c_single"]) + ag.scale_by_scalar(passing, params["branch/c_passing"])
    return ForwardOutput(y, single, passing, atom_single, atom_passing)


def predict(graph: MolecularGraph, params: ModelParams, config: ModelConfig = ModelConfig()) -> np.ndarray:
    """Evaluation-mode predictions without recording gradients."""
    return forward(graph, params.frozen(), config, "eval").y_hat.value.copy()


def predict_forces(graph: MolecularGraph, params: ModelParams, config: ModelConfig = ModelConfig()):
    """Return ``(energies [G], forces [V, 3])`` with forces = -d energy / d positions."""
    pos = ag.parameter(graph.positions.copy(), "positions")
    out = forward(graph, params.frozen(), config, "eval", positions=pos)
    ag.backward(ag.sum_(out.y_hat))
    return out.y_hat.value.copy(), -pos.grad


def gamma_ratio(params: ModelParams):
    """Sum of single-body gates over sum of output-block gates; None when undefined."""
    values = params.gamma_values()
    denom = float(np.sum(values.get("output", [])))
    if denom == 0.0:
        return None
    return float(np.sum(values.get("single", []))) / denom


def describe(params: ModelParams) -> dict:
    """Parameter counts per block type and the gamma registry."""
    counts: dict = {}
    for name, t in params.tensors.items():
        head = name.split("/")[0].rstrip("0123456789") or name
        counts[head] = counts.get(head, 0) + int(t.value.size)
    return {
        "total_parameters": params.num_parameters(),
        "parameters_by_block": counts,
        "gammas": params.gamma_values(),
        "gamma_ratio": gamma_ratio(params),
        "branch": {"c_single": float(params["branch/c_single"].value), "c_passing": float(params["branch/c_passing"].value)},
    }
