"""Compare the network with and without its graph branch through the CLI.

    python3 demos/04_ablation.py

This is the same command the acceptance suite runs at larger scale. At this
size the comparison is noisy; it shows the workflow rather than a verdict.
"""
import json
import tempfile
from pathlib import Path

from spacepose.cli import main

work = Path(tempfile.mkdtemp())
(work / "spec.json").write_text(json.dumps({"n_sequences": 10, "frames_per_sequence": 10, "image_size": 128,
                                            "model": "panelsat", "occluder_prob": 0.5}))
(work / "config.json").write_text(json.dumps({
    "model": {"input_size": 64, "heatmap_size": 16, "base_channels": 8},
    "train": {"epochs": 4, "batch_size": 8, "lr0": 1e-3, "cosine_period_epochs": 4},
}))

main(["--out", str(work / "ds"), "gen", "--spec", str(work / "spec.json")])
main(["--config", str(work / "config.json"), "--out", str(work / "ablation"), "ablate", "--dataset", str(work / "ds")])
print(json.loads((work / "ablation" / "ablation.json").read_text()))
