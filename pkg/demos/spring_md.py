"""Energy-only training on a diatomic spring, then force prediction.

The trajectory has analytic energies E = k (d - r0)^2 / 2.  The network
sees energies only; forces come out as minus the gradient of the predicted
energy with respect to the positions and are compared with the exact ones.

    python demos/spring_md.py            # about a minute
"""

import numpy as np

from lmpnn.model import ModelConfig
from lmpnn.synthetic import spring_trajectory
from lmpnn.trainer import Trainer, TrainConfig, evaluate_md

frames = spring_trajectory(40, seed=0)
train, test = frames[:30], frames[30:]

model = ModelConfig(hidden=32, angle_width=8, num_single_blocks=2, num_output_blocks=3,
                    num_interaction_blocks=2, dropout=0.33)
trainer = Trainer(model, TrainConfig.md(batch_size=10, max_epochs=300, min_epochs=10**6, patience=10**6))
log = trainer.fit(train, None)

for rec in log.records[::50]:
    print(f"epoch {rec['epoch']:4d}  train energy MAE {rec['train_mae']:.3f} kcal/mol")

report = evaluate_md(trainer, test)
print(f"held-out energy MAE {report['energy_mae']:.3f} kcal/mol, force MAE {report['force_mae']:.3f} kcal/mol/A")
spread = np.std([f.targets["energy"] for f in test])
print(f"(energy spread of the held-out frames: {spread:.3f} kcal/mol)")
