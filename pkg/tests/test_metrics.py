import numpy as np
import pytest
from skimage.metrics import structural_similarity

from prommask.exceptions import DataValidationError, UndefinedMetricError
from prommask.metrics import PSNR_CAP, dice, evaluate_reconstructions, iou, nmse, psnr, ssim


def _reference_ssim(a, b, data_range):
    return structural_similarity(a, b, data_range=data_range, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, win_size=11)


def test_nmse_cases(rng):
    x = rng.uniform(0.1, 1, size=(8, 8))
    assert nmse(x, x) == 0
    assert nmse(np.zeros_like(x), x) == pytest.approx(1.0)
    assert nmse(2 * x, x) == pytest.approx(1.0)
    with pytest.raises(UndefinedMetricError):
        nmse(x, np.zeros_like(x))
    with pytest.raises(DataValidationError):
        nmse(x, x[:4])


def test_psnr_cases(rng):
    x = rng.uniform(0, 1, size=(16, 16))
    x[0, 0] = 1.0
    assert psnr(x, x) == PSNR_CAP
    assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(UndefinedMetricError):
        psnr(x, np.zeros_like(x))


def test_ssim_matches_reference(rng):
    for _ in range(10):
        a = rng.uniform(0, 1, size=(32, 40))
        b = a + rng.normal(scale=0.2, size=a.shape)
        rng_ = a.max() - a.min()
        assert ssim(b, a) == pytest.approx(_reference_ssim(b, a, rng_), abs=1e-10)


def test_ssim_identity_and_noise():
    x = np.random.default_rng(0).uniform(size=(32, 32))
    assert ssim(x, x) == pytest.approx(1.0)
    vals = []
    for seed in range(100):
        r = np.random.default_rng(seed)
        vals.append(ssim(r.uniform(size=(64, 64)), r.uniform(size=(64, 64))))
    assert -0.2 < np.mean(vals) < 0.2


def test_ssim_small_offset():
    x = np.random.default_rng(1).uniform(size=(48, 48))
    val = ssim(x + 0.01 * (x.max() - x.min()), x)
    assert 0.9 < val < 1.0


def test_ssim_degenerate():
    flat = np.full((16, 16), 0.3)
    assert ssim(flat, flat) == 1.0
    with pytest.raises(UndefinedMetricError):
        ssim(flat + 0.1, flat)
    with pytest.raises(DataValidationError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))


def test_ssim_symmetric_range(rng):
    a = rng.uniform(0, 1, size=(24, 24))
    b = 1.5 * a + rng.normal(scale=0.1, size=a.shape)
    assert ssim(a, b, symmetric_range=True) == pytest.approx(ssim(b, a, symmetric_range=True), abs=1e-14)


def test_dice_iou_cases():
    assert dice([1, 1, 0], [1, 1, 0]) == 1.0
    assert dice([1, 1, 0, 0], [0, 0, 1, 1]) == 0.0
    assert dice([1, 1, 0], [0, 1, 1]) == 0.5
    assert iou([1, 0, 1], [1, 0, 1]) == 1.0
    assert iou([1, 0], [0, 1]) == 0.0
    assert iou([1, 1, 0], [0, 1, 1]) == pytest.approx(1 / 3)
    assert dice([0, 0], [0, 0]) == 1.0 and iou([0, 0], [0, 0]) == 1.0
    assert dice([2, 2, 0], [0, 2, 2], class_id=2) == 0.5


def test_dice_iou_relation(rng):
    for _ in range(100):
        a, b = rng.integers(0, 3, size=(2, 10, 10))
        j = iou(a, b)
        assert dice(a, b) == pytest.approx(2 * j / (1 + j), abs=1e-12)


def test_report(rng):
    t = rng.uniform(0.1, 1, size=(3, 16, 16))
    report = evaluate_reconstructions(t, t, ("nmse", "psnr"), alpha=4)
    assert len(report) == 3 and report.metrics == ["nmse", "psnr"]
    assert report.aggregate == {"nmse": 0.0, "psnr": PSNR_CAP}
    with pytest.raises(DataValidationError):
        evaluate_reconstructions(t, t, ("mae",))
