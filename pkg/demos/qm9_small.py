"""Train on a small QM9 slice and look at the gamma-ratio diagnostic.

Uses the bundled 6000-molecule sample.  A reduced network keeps this to a
few minutes; pass --full to use the default architecture.

    python demos/qm9_small.py [--full]
"""

import sys
from pathlib import Path

from lmpnn.constants import HARTREE_TO_EV
from lmpnn.io import load_qm9
from lmpnn.model import ModelConfig, describe
from lmpnn.trainer import TrainConfig, evaluate, train

data = Path(__file__).resolve().parents[1] / "data" / "qm9_sample.tar.gz"
mols = load_qm9(data, limit=300)

model = ModelConfig() if "--full" in sys.argv else ModelConfig(hidden=48, angle_width=16)
config = TrainConfig(target="u0", max_epochs=90, min_epochs=10**6, patience=10**6)
trainer, log, split = train(mols, model, config)

print(f"parameters: {describe(trainer.params)['total_parameters']}")
for rec in log.records[::15]:
    valid = rec["valid_mae"] * HARTREE_TO_EV
    print(f"epoch {rec['epoch']:3d}  valid MAE {valid:.3f} eV")
print("gamma ratio (single-body gates / output gates):")
for g in log.gamma_ratio:
    print(f"  epoch {g['epoch']:3d}  {g['ratio']:.4f}")

by_id = {m.id: m for m in mols}
rep = evaluate(trainer, [by_id[i] for i in split.test_ids])
print(f"test MAE {rep['mae_report']:.3f} {rep['report_unit']} on {rep['n']} molecules")
