import numpy as np
import pytest

from spacepose.errors import ConfigError, EmptySplitError
from spacepose.evaluate import (
    GroundTruthDetector,
    ModelDetector,
    OracleDetector,
    evaluate_keypoints,
    evaluate_pose,
)
from spacepose.nnet import GraphKeypointNet, ModelConfig, load_checkpoint, save_checkpoint


def cfg(ds, **kw):
    base = dict(n_keypoints=ds.model.n_keypoints, input_size=64, heatmap_size=16, edges=ds.edges)
    return ModelConfig(**{**base, **kw})


def test_ground_truth_keypoints_give_zero_rmse(tiny_dataset):
    report, preds = evaluate_keypoints(GroundTruthDetector(cfg(tiny_dataset)), tiny_dataset.split("test"))
    assert report.rmse == 0
    assert preds.pred.shape == (len(tiny_dataset.split("test")), 12, 2)


@pytest.mark.parametrize("heatmap_size, lam", [(16, 4.0), (64, 1.0)])
def test_heatmap_oracle_rmse_bounded_by_lambda(tiny_dataset, heatmap_size, lam):
    c = cfg(tiny_dataset, heatmap_size=heatmap_size)
    report, preds = evaluate_keypoints(OracleDetector(c), tiny_dataset.split("train"))
    assert report.rmse <= lam
    inside = (preds.gt >= 0) & (preds.gt <= 64 - lam)
    assert np.abs(preds.pred - preds.gt)[inside].max() <= lam


def test_pipeline_identity_every_frame(tiny_dataset):
    records = tiny_dataset.split("train") + tiny_dataset.split("val")
    _, _, poses = evaluate_pose(GroundTruthDetector(cfg(tiny_dataset)), records, tiny_dataset.model.keypoints3d)
    for rec, est in zip(records, poses):
        assert np.linalg.norm(est.t - rec.pose.t) / np.linalg.norm(rec.pose.t) < 1e-6
        assert 2 * np.arccos(min(1.0, abs(float(est.q @ rec.pose.q)))) < 1e-6


def test_keypoint_count_mismatch(tiny_dataset):
    with pytest.raises(ConfigError):
        evaluate_keypoints(OracleDetector(ModelConfig(n_keypoints=5, input_size=64, heatmap_size=16)),
                           tiny_dataset.split("test"))


def test_empty_split_is_an_error():
    with pytest.raises(EmptySplitError):
        evaluate_keypoints(OracleDetector(ModelConfig(n_keypoints=4, input_size=64, heatmap_size=16)), [])
    with pytest.raises(EmptySplitError):
        evaluate_pose(OracleDetector(ModelConfig(n_keypoints=4, input_size=64, heatmap_size=16)), [], np.zeros((4, 3)))


def test_report_digest_matches_checkpoint(tiny_dataset, tmp_path):
    model = GraphKeypointNet(cfg(tiny_dataset, input_size=32, heatmap_size=8, base_channels=4, gcn_blocks=1,
                                 c_in=6, c_out=5))
    save_checkpoint(tmp_path / "m.npz", model)
    loaded, meta, _ = load_checkpoint(tmp_path / "m.npz")
    report, _ = evaluate_keypoints(ModelDetector(loaded), tiny_dataset.split("test"))
    assert report.config_digest == ModelConfig.from_dict(meta["model_config"]).digest()
    assert np.isfinite(report.rmse) and report.rmse >= 0
    assert "config digest" in report.table()


def test_report_json_round_trip(tiny_dataset):
    import json

    report, _ = evaluate_keypoints(OracleDetector(cfg(tiny_dataset)), tiny_dataset.split("test"))
    assert json.loads(report.to_json())["rmse"] == report.rmse
