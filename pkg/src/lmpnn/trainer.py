"""Training loop, learning-rate schedule, early stopping and evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .checkpoint import load_checkpoint, save_checkpoint
from .constants import ENERGY_UNITS, TARGET_UNITS
from .graph import MolecularGraph, batch_graphs, build_graph
from .io import Molecule, convert_energy, split_by_counts, split_dataset
from .model import ELEMENTS, ModelConfig, ModelParams, forward, gamma_ratio, init_params, predict_forces
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, batch, norms):
        self.epoch, self.batch, self.parameter_norms = epoch, batch, norms
        worst = sorted(norms.items(), key=lambda kv: -kv[1] if math.isfinite(kv[1]) else -math.inf)[:5]
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}; largest parameter norms: {worst}")


@dataclass(frozen=True)
class TrainConfig:
    target: str = "u0"
    batch_size: int = 24
    lr0: float = 1e-3
    decay_factor: float = 0.96
    decay_interval: int = 20
    min_epochs: int = 300
    max_epochs: int = 3000
    patience: int = 30
    seed: int = 0
    gamma_log_interval: int = 30
    gamma_log_until: int = 240
    split: tuple = (0.8, 0.1, 0.1)
    md_train: int = 1000
    md_test: int = 500
    md_valid: int = 100
    standardize: str = "atomref"
    target_mae: float | None = None
    eval_train: bool = False
    eval_batch_size: int = 128

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay factor must be in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.standardize not in ("atomref", "zscore", "none"):
            raise ValueError(f"unknown standardization {self.standardize!r}")

    @classmethod
    def md(cls, **overrides) -> "TrainConfig":
        base = dict(target="energy", decay_factor=0.9, standardize="zscore")
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


def lr_at_epoch(epoch: int, config: TrainConfig = TrainConfig()) -> float:
    """Step schedule: ``lr0 * factor ** floor(epoch / interval)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    steps = epoch // config.decay_interval
    return config.lr0 if steps == 0 else config.lr0 * config.decay_factor**steps


class EarlyStopping:
    """Stop once ``patience`` epochs pass without a strictly lower metric,
    but never before ``min_epochs`` completed epochs."""

    def __init__(self, patience: int, min_epochs: int = 0):
        self.patience = patience
        self.min_epochs = min_epochs
        self.best = math.inf
        self.best_epoch = None

    def update(self, epoch: int, value: float) -> bool:
        improved = value < self.best
        if improved:
            self.best, self.best_epoch = value, epoch
        return self.should_stop(epoch)

    def should_stop(self, epoch: int) -> bool:
        if epoch < self.min_epochs or self.best_epoch is None:
            return False
        return epoch - self.best_epoch >= self.patience


def gamma_epochs(config: TrainConfig, last_epoch: int) -> list[int]:
    step = config.gamma_log_interval
    return [e for e in range(step, min(config.gamma_log_until, last_epoch) + 1, step)]


# ----------------------------------------------------------- standardization


def _composition(mols: Sequence[Molecule]) -> np.ndarray:
    counts = np.zeros((len(mols), len(ELEMENTS)))
    for r, m in enumerate(mols):
        for c, z in enumerate(ELEMENTS):
            counts[r, c] = np.count_nonzero(m.atomic_numbers == z)
    return counts


@dataclass
class TargetScaler:
    """Maps targets to the training scale: ``(y - baseline) / scale``.

    ``atomref`` fits a per-element reference by least squares, so the sum
    readout only has to learn the residual; ``zscore`` uses the train mean.
    """

    kind: str = "atomref"
    element_ref: list = field(default_factory=lambda: [0.0] * len(ELEMENTS))
    mean: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, mols: Sequence[Molecule], target: str, kind: str = "atomref") -> "TargetScaler":
        y = np.array([m.targets[target] for m in mols])
        if kind == "none":
            return cls(kind)
        if kind == "zscore":
            std = float(y.std())
            return cls(kind, mean=float(y.mean()), scale=std if std > 0 else 1.0)
        counts = _composition(mols)
        ref, *_ = np.linalg.lstsq(counts, y, rcond=None)
        resid = y - counts @ ref
        std = float(resid.std())
        return cls(kind, ref.tolist(), 0.0, std if std > 1e-12 else 1.0)

    def baseline(self, mols: Sequence[Molecule]) -> np.ndarray:
        return _composition(mols) @ np.asarray(self.element_ref) + self.mean

    def transform(self, y, mols) -> np.ndarray:
        return (np.asarray(y) - self.baseline(mols)) / self.scale

    def inverse(self, y_scaled, mols) -> np.ndarray:
        return np.asarray(y_scaled) * self.scale + self.baseline(mols)


# -------------------------------------------------------------------- logging


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    gamma_ratio: list = field(default_factory=list)
    best_epoch: int | None = None
    best_valid_mae: float = math.inf
    best_checkpoint: str | None = None
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainLog":
        return cls(**d)

    @property
    def valid_mae(self) -> list:
        return [r["valid_mae"] for r in self.records]

    @property
    def train_mae(self) -> list:
        return [r.get("train_mae") for r in self.records]


def read_log(path) -> TrainLog:
    """Load a TrainLog from ``summary.json`` or rebuild it from ``log.jsonl``."""
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json" if (path / "summary.json").exists() else path / "log.jsonl"
    if path.suffix == ".jsonl":
        log_ = TrainLog()
        for line in path.read_text().splitlines():
            rec = json.loads(line)
            if rec.get("kind") == "gamma":
                log_.gamma_ratio.append({"epoch": rec["epoch"], "ratio": rec["ratio"]})
            elif rec.get("kind") == "epoch":
                log_.records.append({k: v for k, v in rec.items() if k != "kind"})
        return log_
    return TrainLog.from_dict(json.loads(path.read_text())["log"])


# ------------------------------------------------------------------- training


class Trainer:
    """Mini-batch Adam training with stepwise decay and early stopping."""

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, out_dir=None):
        self.model_config = model_config
        self.config = train_config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.params: ModelParams | None = None
        self.scaler: TargetScaler | None = None
        self.adam = AdamState()
        self._graphs: dict = {}

    # graphs are built once per molecule and reused every epoch
    def graphs(self, mols: Sequence[Molecule]) -> list[MolecularGraph]:
        out = []
        for m in mols:
            key = id(m)
            if key not in self._graphs:
                g = build_graph(m, self.model_config.cutoff)
                g.expansions(self.model_config.radial, self.model_config.angular)
                self._graphs[key] = (m, g)
            out.append(self._graphs[key][1])
        return out

    def predict(self, mols: Sequence[Molecule], params: ModelParams | None = None) -> np.ndarray:
        """Predictions in native target units (evaluation mode)."""
        params = (params or self.params).frozen()
        graphs = self.graphs(mols)
        bs = self.config.eval_batch_size
        scaled = np.concatenate([
            forward(batch_graphs(graphs[i:i + bs]), params, self.model_config, "eval").y_hat.value
            for i in range(0, len(graphs), bs)
        ]) if graphs else np.zeros(0)
        return self.scaler.inverse(scaled, mols)

    def mae(self, mols: Sequence[Molecule]) -> float:
        y = np.array([m.targets[self.config.target] for m in mols])
        return float(np.mean(np.abs(self.predict(mols) - y)))

    def _meta(self) -> dict:
        return {
            "model_config": self.model_config.to_dict(),
            "train_config": self.config.to_dict(),
            "scaler": asdict(self.scaler),
            "gammas": self.params.gammas,
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.params.arrays(), self._meta(), self.adam)

    def _emit(self, fh, record: dict) -> None:
        if fh is not None:
            fh.write(json.dumps(record) + "\n")
            fh.flush()

    def fit(self, train_set: Sequence[Molecule], valid_set: Sequence[Molecule], params: ModelParams | None = None) -> TrainLog:
        cfg = self.config
        target = cfg.target
        valid_set = list(valid_set or [])
        for m in list(train_set) + valid_set:
            if target not in m.targets:
                raise KeyError(f"molecule {m.id} lacks target {target!r}")
        self.params = params or init_params(self.model_config, cfg.seed)
        self.scaler = TargetScaler.fit(train_set, target, cfg.standardize)
        y_train = self.scaler.transform([m.targets[target] for m in train_set], train_set)
        graphs = self.graphs(train_set)
        names = {id(t): k for k, t in self.params.tensors.items()}
        arrays = self.params.arrays()

        log_ = TrainLog()
        stopper = EarlyStopping(cfg.patience, cfg.min_epochs)
        gamma_at = set(gamma_epochs(cfg, cfg.max_epochs))
        fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            fh = open(self.out_dir / "log.jsonl", "w")
        start = time.perf_counter()
        try:
            record = {"epoch": 0, "train_loss": None, "lr": None, "train_mae": self.mae(train_set),
                      "valid_mae": self.mae(valid_set) if valid_set else None}
            record["wall_time"] = time.perf_counter() - start
            log_.records.append(record)
            self._emit(fh, {"kind": "epoch", **record})

            for epoch in range(1, cfg.max_epochs + 1):
                lr = lr_at_epoch(epoch - 1, cfg)
                order = np.random.default_rng([cfg.seed, epoch]).permutation(len(graphs))
                drop_rng = np.random.default_rng([cfg.seed, epoch, 1])
                losses, abs_err = [], []
                for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
                    idx = order[lo:lo + cfg.batch_size]
                    batch = batch_graphs([graphs[i] for i in idx])
                    out = forward(batch, self.params, self.model_config, "train", rng=drop_rng)
                    loss = ag.mean(ag.square(out.y_hat - y_train[idx]))
                    if not np.isfinite(loss.value):
                        norms = {k: float(np.linalg.norm(v)) for k, v in arrays.items()}
                        raise NonFiniteLossError(epoch, b, norms)
                    grads = ag.backward(loss)
                    adam_step(arrays, {names[id(t)]: g for t, g in grads.items() if id(t) in names}, self.adam, lr)
                    losses.append(float(loss.value) * len(idx))
                    abs_err.append(np.abs(out.y_hat.value - y_train[idx]))

                # running train MAE: batch predictions made just before each update
                running = float(np.mean(np.concatenate(abs_err))) * self.scaler.scale
                record = {"epoch": epoch, "train_loss": sum(losses) / len(graphs), "lr": lr}
                if cfg.eval_train or (cfg.target_mae is not None and running < cfg.target_mae):
                    record["train_mae"], record["train_mae_kind"] = self.mae(train_set), "eval"
                else:
                    record["train_mae"], record["train_mae_kind"] = running, "running"
                record["valid_mae"] = self.mae(valid_set) if valid_set else None
                record["wall_time"] = time.perf_counter() - start
                log_.records.append(record)
                self._emit(fh, {"kind": "epoch", **record})

                if epoch in gamma_at:
                    entry = {"epoch": epoch, "ratio": gamma_ratio(self.params)}
                    log_.gamma_ratio.append(entry)
                    self._emit(fh, {"kind": "gamma", **entry})

                monitor = record["valid_mae"] if valid_set else record["train_mae"]
                stop = stopper.update(epoch, monitor)
                if stopper.best_epoch == epoch:
                    log_.best_epoch, log_.best_valid_mae = epoch, monitor
                    self._best = {k: v.copy() for k, v in arrays.items()}
                    if self.out_dir is not None:
                        self.save(self.out_dir / "best.ckpt")
                        log_.best_checkpoint = str(self.out_dir / "best.ckpt")
                if epoch % 10 == 0 or epoch == 1:
                    log.info("epoch %d loss %.4g train MAE %.4g valid MAE %s lr %.3g", epoch, record["train_loss"],
                             record["train_mae"], record["valid_mae"], lr)
                if cfg.target_mae is not None and record["train_mae_kind"] == "eval" and record["train_mae"] < cfg.target_mae:
                    log_.stop_reason = "target_mae"
                    break
                if stop:
                    log_.stop_reason = "early_stopping"
                    break
            else:
                log_.stop_reason = "max_epochs"
        finally:
            if fh is not None:
                fh.close()
        if self.out_dir is not None:
            self.save(self.out_dir / "last.ckpt")
            summary = {"log": log_.to_dict(), "model_config": self.model_config.to_dict(), "train_config": cfg.to_dict()}
            (self.out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
        self.log = log_
        return log_

    def restore_best(self) -> None:
        if getattr(self, "_best", None) is not None:
            self.params.load_arrays(self._best)


def train(dataset: Sequence[Molecule], model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), out_dir=None):
    """Split ``dataset`` 80/10/10 by ``train_config.seed`` and fit.

    Returns ``(trainer, log, split)``; the trainer holds the best parameters.
    """
    by_id = {m.id: m for m in dataset}
    split = split_dataset(list(by_id), train_config.split, train_config.seed)
    trainer = Trainer(model_config, train_config, out_dir)
    log_ = trainer.fit([by_id[i] for i in split.train_ids], [by_id[i] for i in split.valid_ids])
    trainer.restore_best()
    return trainer, log_, split


def md_energy_training(frames: Sequence[Molecule], model_config: ModelConfig | None = None,
                       train_config: TrainConfig | None = None, out_dir=None):
    """Energy-only training on MD frames (dropout 0.33, decay 0.9 by default).

    Validation frames are carved from the training frames.  Returns
    ``(trainer, log, split)``.
    """
    model_config = model_config or ModelConfig(dropout=0.33)
    train_config = train_config or TrainConfig.md()
    by_id = {m.id: m for m in frames}
    split = split_by_counts(list(by_id), train_config.md_train, train_config.md_test,
                            train_config.md_valid, train_config.seed)
    train_set = [by_id[i] for i in split.train_ids]
    valid_set = [by_id[i] for i in split.valid_ids] or train_set
    trainer = Trainer(model_config, train_config, out_dir)
    log_ = trainer.fit(train_set, valid_set)
    trainer.restore_best()
    return trainer, log_, split


# ----------------------------------------------------------------- evaluation


def report_unit(target: str) -> tuple[str, str]:
    return TARGET_UNITS.get(target, ("", ""))


def _convert(value: float, native: str, report: str) -> float:
    if native == report:
        return value
    if native in ENERGY_UNITS and report in ENERGY_UNITS:
        return float(convert_energy(value, native, report))
    raise ValueError(f"no conversion from {native!r} to {report!r}")


def mae_report(predictions, targets, target: str) -> dict:
    native, report = report_unit(target)
    if target not in TARGET_UNITS:
        raise ValueError(f"unknown unit for target {target!r}")
    mae = float(np.mean(np.abs(np.asarray(predictions) - np.asarray(targets))))
    out = {"target": target, "n": int(len(targets)), "mae": mae, "unit": native,
           "mae_report": _convert(mae, native, report), "report_unit": report}
    if native in ENERGY_UNITS:
        out["mae_eV"] = _convert(mae, native, "eV")
        out["mae_meV"] = _convert(mae, native, "meV")
    return out


def load_trainer(checkpoint) -> Trainer:
    arrays, meta, adam = load_checkpoint(checkpoint)
    mc = ModelConfig(**meta["model_config"])
    tc_dict = dict(meta["train_config"])
    tc_dict["split"] = tuple(tc_dict["split"])
    trainer = Trainer(mc, TrainConfig(**tc_dict))
    trainer.params = init_params(mc, 0)
    trainer.params.load_arrays(arrays)
    trainer.scaler = TargetScaler(**meta["scaler"])
    trainer.adam = adam or AdamState()
    return trainer


def evaluate(checkpoint, molecules: Sequence[Molecule], target: str | None = None) -> dict:
    """MAE of a checkpoint (path or Trainer) in native and reporting units."""
    trainer = checkpoint if isinstance(checkpoint, Trainer) else load_trainer(checkpoint)
    target = target or trainer.config.target
    if target != trainer.config.target:
        raise ValueError(f"checkpoint was trained on {trainer.config.target!r}, not {target!r}")
    y = np.array([m.targets[target] for m in molecules])
    return mae_report(trainer.predict(molecules), y, target)


def evaluate_md(checkpoint, frames: Sequence[Molecule]) -> dict:
    """Energy MAE (kcal/mol) and force MAE (kcal/mol/Å) of an MD model."""
    trainer = checkpoint if isinstance(checkpoint, Trainer) else load_trainer(checkpoint)
    energy = mae_report(trainer.predict(frames), [f.targets["energy"] for f in frames], "energy")
    force_err = []
    for f in frames:
        if f.forces is None:
            continue
        g = trainer.graphs([f])[0]
        _, forces = predict_forces(g, trainer.params, trainer.model_config)
        force_err.append(np.abs(forces * trainer.scaler.scale - f.forces).ravel())
    out = {"energy_mae": energy["mae"], "energy_unit": "kcal_per_mol"}
    if force_err:
        out["force_mae"] = float(np.mean(np.concatenate(force_err)))
        out["force_unit"] = "kcal_per_mol_per_A"
    return out
