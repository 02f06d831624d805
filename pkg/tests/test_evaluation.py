import numpy as np
import pytest
import torch
from PIL import Image

from advface.attacks import AttackResult
from advface.evaluation import (
    CampaignReport,
    TransferTable,
    attack_success_rate,
    campaign_report,
    contact_sheet,
    feature_statistics,
    fid,
    frechet_distance,
    held_out_success,
    leave_one_out_transfer,
    timing_comparison,
)
from advface.forensics import ConstantClassifier
from advface.losses import PixelFeatures
from advface.validation import InvalidArgumentError, NumericDegeneracyError

# two 3x3 Gaussians; the value below came from scipy.linalg.sqrtm(S_a @ S_b)
MU_A = np.array([0.0, 1.0, -0.5])
MU_B = np.array([0.3, 0.8, 0.1])
COV_A = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]])
COV_B = np.array([[1.0, -0.2, 0.0], [-0.2, 1.5, 0.4], [0.0, 0.4, 0.8]])
FROZEN_FD = 0.8453589435881137


def _res(flags, seconds=1.0, image=None):
    return AttackResult(
        final_latent=torch.zeros(8, 4), final_noise=[], image=torch.zeros(3, 4, 4) if image is None else image,
        loss_trace=[], success_per_classifier=flags, iterations_used=1, wall_clock_seconds=seconds,
    )


def test_asr_counts_flags():
    rs = [_res({"a": True}), _res({"a": False}), _res({"a": True}), _res({"a": False})]
    assert attack_success_rate(rs, "a") == 0.5
    assert attack_success_rate(rs[::-1], "a") == 0.5
    assert attack_success_rate(rs[:1], "a") == 1.0


def test_asr_errors():
    with pytest.raises(InvalidArgumentError):
        attack_success_rate([], "a")
    with pytest.raises(InvalidArgumentError):
        attack_success_rate([_res({"a": True})], "b")


def test_held_out_success():
    rs = [_res({}), _res({})]
    assert held_out_success(rs, ConstantClassifier(0.7, input_shape=(4, 4, 3))).tolist() == [True, True]
    assert held_out_success(rs, ConstantClassifier(0.7, input_shape=(4, 4, 3)), threshold=0.8).tolist() == [False] * 2


def test_frechet_frozen_oracle():
    assert frechet_distance(MU_A, COV_A, MU_B, COV_B) == pytest.approx(FROZEN_FD, rel=1e-10)
    assert frechet_distance(MU_B, COV_B, MU_A, COV_A) == pytest.approx(FROZEN_FD, rel=1e-10)


def test_frechet_identical_is_zero():
    assert frechet_distance(MU_A, COV_A, MU_A, COV_A) == pytest.approx(0.0, abs=1e-10)


def test_frechet_diagonal_closed_form():
    # (sqrt(a) - sqrt(b))^2 per dimension plus the mean gap
    a, b = np.array([1.0, 4.0]), np.array([9.0, 1.0])
    expected = 1.0 + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
    assert frechet_distance([0, 0], np.diag(a), [1, 0], np.diag(b)) == pytest.approx(expected, rel=1e-12)


def test_fid_on_features_and_symmetry():
    rng = np.random.default_rng(0)
    fa, fb = rng.normal(size=(400, 5)), rng.normal(0.5, 1.2, size=(300, 5))
    assert fid(fa, fb) == pytest.approx(fid(fb, fa), rel=1e-9)
    assert fid(fa, fa) == pytest.approx(0.0, abs=1e-9)
    assert fid(fa, fb) > 1.0


def test_fid_degenerate_without_shrinkage():
    rng = np.random.default_rng(1)
    few = rng.normal(size=(4, 6))
    with pytest.raises(NumericDegeneracyError):
        feature_statistics(few, shrinkage=None)
    with pytest.raises(NumericDegeneracyError):
        fid(few, few, shrinkage=None)
    assert np.isfinite(fid(few, rng.normal(size=(4, 6))))


def test_fid_images_through_phi():
    g = torch.Generator().manual_seed(0)
    a, b = torch.rand(50, 3, 2, 2, generator=g), torch.rand(50, 3, 2, 2, generator=g)
    assert fid(a, b, PixelFeatures()) == pytest.approx(fid(a.flatten(1).numpy(), b.flatten(1).numpy()), rel=1e-6)


def test_transfer_table_validation_and_csv(tmp_path):
    with pytest.raises(InvalidArgumentError):
        TransferTable({"m": {"a": 101.0}})
    with pytest.raises(InvalidArgumentError):
        TransferTable({"m": {"a": float("nan")}})
    t = TransferTable({"ensemble": {"a": 12.0, "b": 37.25}, "meta": {"a": 13.0, "b": 40.0}})
    text = t.to_csv(tmp_path / "t.csv")
    assert text == "method,a,b\nensemble,12.0,37.2\nmeta,13.0,40.0\n"
    assert (tmp_path / "t.csv").read_text() == text


def test_leave_one_out_protocol():
    pool = {"a": ConstantClassifier(0.9, (4, 4, 3), "a"), "b": ConstantClassifier(0.1, (4, 4, 3), "b"),
            "c": ConstantClassifier(0.9, (4, 4, 3), "c")}
    calls = []

    def runner(kept, seeds):
        calls.append((sorted(kept), list(seeds)))
        return [_res({k: True for k in kept}) for _ in seeds]

    t = leave_one_out_transfer(pool, {"m": runner}, n_seeds=3, repetitions=2, seed_offset=10)
    assert t.rows["m"] == {"a": 100.0, "b": 0.0, "c": 100.0}
    assert t.white_box["m"]["b"] == 100.0
    assert calls[0] == (["b", "c"], [10, 11, 12])
    assert calls[1] == (["b", "c"], [13, 14, 15])
    assert all(held not in kept for (kept, _), held in zip(calls, "aabbcc"))
    with pytest.raises(InvalidArgumentError):
        leave_one_out_transfer({"a": pool["a"]}, {"m": runner}, n_seeds=1)


def test_timing_comparison():
    rs = [_res({}, s) for s in (1.0, 2.0, 3.0)]
    same = timing_comparison(rs, rs)
    assert same.speedup == 1.0 and same.median_a == 2.0
    slow = timing_comparison(rs, [_res({}, 8.0)])
    assert slow.speedup == pytest.approx(4.0)
    with pytest.raises(InvalidArgumentError):
        timing_comparison([], rs)


def test_campaign_report():
    g = torch.Generator().manual_seed(3)
    rs = [_res({"a": i % 2 == 0}, 1.0 + i, torch.rand(3, 4, 4, generator=g)) for i in range(6)]
    ref = torch.rand(40, 3, 4, 4, generator=g)
    rep = campaign_report(rs, ref, PixelFeatures(), {"method": "x"})
    assert rep.per_classifier_asr == {"a": 0.5}
    assert rep.fid > 0 and rep.timings["median_seconds"] == 3.5
    assert rep.to_csv(method="x").splitlines()[1].startswith("x,a,0.5000,")
    with pytest.raises(InvalidArgumentError):
        CampaignReport({"a": 1.5})


def test_contact_sheet(tmp_path):
    imgs = torch.rand(12, 3, 4, 4)
    path = contact_sheet(imgs, tmp_path / "s" / "sheet.png", columns=5, scale=2)
    assert Image.open(path).size == (5 * 4 * 2, 3 * 4 * 2)
