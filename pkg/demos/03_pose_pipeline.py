"""Follow one frame through detection and PnP, with an oracle in place of the network.

    python3 demos/03_pose_pipeline.py

The oracle encodes the true keypoints as heatmaps and decodes them again, so
the only error left is heatmap quantisation. Shrinking the heatmap shows how
that error feeds into the recovered pose.
"""
import tempfile
from pathlib import Path

import numpy as np

from spacepose.evaluate import OracleDetector, predict_split
from spacepose.geometry import pose_error_rotation, pose_error_translation
from spacepose.nnet import ModelConfig
from spacepose.pnpsolve import PnPOptions, solve
from spacepose.synthgen import Dataset, DatasetSpec, generate_dataset, make_satellite
from spacepose.trainer import PreparedSplit

ds = Dataset(generate_dataset(DatasetSpec(n_sequences=5, frames_per_sequence=4, image_size=256, seed=4),
                              make_satellite("antennasat"), Path(tempfile.mkdtemp()) / "ds"))
rec = ds.split("test")[0]
print(f"true pose: q = {np.round(rec.pose.q, 4)}, t = {np.round(rec.pose.t, 3)}")

for heatmap_size in (256, 64, 32):
    cfg = ModelConfig(n_keypoints=ds.model.n_keypoints, input_size=256, heatmap_size=heatmap_size, edges=ds.edges)
    prepared = PreparedSplit([rec], cfg)
    crop = prepared.item(0)[3]
    kp_image = crop.inverse(predict_split(OracleDetector(cfg), prepared).pred[0])
    est = solve(ds.model.keypoints3d, ds.intrinsics, points2d=kp_image).pose
    print(f"heatmap {heatmap_size:3d}px: keypoint error {np.abs(kp_image - rec.keypoints2d).max():6.3f} px, "
          f"E_t {pose_error_translation([est.t], [rec.pose.t]):.2e}, "
          f"E_q {pose_error_rotation([est.q], [rec.pose.q]):.2e} rad")

# a single grossly wrong detection ruins least squares but not RANSAC
kp = rec.keypoints2d.copy()
kp[0] += 80
for robust in (False, True):
    res = solve(ds.model.keypoints3d, ds.intrinsics, PnPOptions(robust=robust), points2d=kp)
    tag = "RANSAC" if robust else "plain "
    extra = f", outliers {np.flatnonzero(~res.inliers).tolist()}" if robust else ""
    print(f"{tag} with one outlier: E_t {pose_error_translation([res.pose.t], [rec.pose.t]):.2e}{extra}")
