"""Train a small keypoint network for a few epochs and evaluate it.

    python3 demos/02_train_and_evaluate.py

The network here is deliberately small so the script finishes in under a
minute on one CPU core; expect a keypoint RMSE far from what a full-size model
reaches after the default 80-epoch schedule.
"""
import tempfile
from pathlib import Path

from spacepose.evaluate import ModelDetector, evaluate_pose
from spacepose.nnet import ModelConfig, count_parameters, load_checkpoint
from spacepose.synthgen import Dataset, DatasetSpec, generate_dataset, make_satellite
from spacepose.trainer import TrainConfig, train

work = Path(tempfile.mkdtemp())
ds = Dataset(generate_dataset(DatasetSpec(n_sequences=20, frames_per_sequence=12, image_size=128, seed=2),
                              make_satellite("boxsat"), work / "ds"))

model_cfg = ModelConfig(n_keypoints=ds.model.n_keypoints, input_size=64, heatmap_size=16, base_channels=8,
                        edges=ds.edges)
train_cfg = TrainConfig(epochs=30, batch_size=8, lr0=1e-3, cosine_period_epochs=30)
result = train(ds, model_cfg, train_cfg, work / "run")

print("epoch  lr        train loss  val RMSE [px]")
for row in result.rows:
    print(f"{row['epoch']:5d}  {row['lr']:.2e}  {row['train_loss']:.5f}     {row['val_rmse']:.2f}")

model, _, _ = load_checkpoint(result.best_checkpoint)
print(f"\nbest checkpoint: {result.best_checkpoint} ({count_parameters(model)} parameters)")
# the pose report carries keypoint RMSE as well; pose errors stay large until the detector is good
report, _, _ = evaluate_pose(ModelDetector(model), ds.split("test"), ds.model.keypoints3d)
print(report.table())
