import math

import numpy as np
import pytest
import torch

from funduslab.config import LESIONS
from funduslab.data.types import LesionMaskSet
from funduslab.errors import DataIntegrityError, ShapeError
from funduslab.seg import LesionPredictionSet, LesionSegmenter, multi_lesion_seg_loss, wbce
from funduslab.seg.models import image_to_tensor, predict_lesions


class TestWbce:
    def test_perfect_prediction_near_zero(self):
        pred = torch.ones(4, 4)
        target = torch.ones(4, 4)
        assert float(wbce(pred, target, 10.0)) < 1e-5

    def test_positive_pixel_half_confidence(self):
        # y_true=1, y=0.5, beta=10 -> 10 * ln 2
        loss = wbce(torch.tensor([0.5]), torch.tensor([1.0]), 10.0)
        assert float(loss) == pytest.approx(10 * math.log(2), rel=1e-6)

    def test_negative_pixel_half_confidence(self):
        # y_true=0, y=0.5, beta=10 -> ln 2 (beta weights the positive term only)
        loss = wbce(torch.tensor([0.5]), torch.tensor([0.0]), 10.0)
        assert float(loss) == pytest.approx(math.log(2), rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            wbce(torch.ones(2, 2), torch.ones(3, 3), 1.0)

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        pred = torch.rand(8, 8, dtype=torch.float64) * 0.8 + 0.1
        pred.requires_grad_(True)
        target = (torch.rand(8, 8) > 0.7).double()
        loss = wbce(pred, target, 10.0)
        (analytic,) = torch.autograd.grad(loss, pred)
        step = 1e-4
        for idx in [(0, 0), (3, 5), (7, 7), (2, 2)]:
            bumped = pred.detach().clone()
            bumped[idx] += step
            hi = float(wbce(bumped, target, 10.0))
            bumped[idx] -= 2 * step
            lo = float(wbce(bumped, target, 10.0))
            fd = (hi - lo) / (2 * step)
            assert fd == pytest.approx(float(analytic[idx]), rel=1e-3)

    def test_complement_symmetry_at_unit_beta(self):
        torch.manual_seed(1)
        pred = torch.rand(6, 6) * 0.9 + 0.05
        target = (torch.rand(6, 6) > 0.5).float()
        a = float(wbce(pred, target, 1.0))
        b = float(wbce(1.0 - pred, 1.0 - target, 1.0))
        assert a == pytest.approx(b, rel=1e-5)

    def test_accepts_numpy(self):
        loss = wbce(np.full((2, 2), 0.5), np.zeros((2, 2)), 10.0)
        assert float(loss) == pytest.approx(math.log(2), rel=1e-6)


class TestMultiLesionLoss:
    def _pred_set(self, value: float, shape=(4, 4)) -> LesionPredictionSet:
        return LesionPredictionSet(
            image_id="a", probs={l: np.full(shape, value, dtype=np.float32) for l in LESIONS}
        )

    def _mask_set(self, value: int, shape=(4, 4)) -> LesionMaskSet:
        return LesionMaskSet(
            image_id="a", masks={l: np.full(shape, value, dtype=np.uint8) for l in LESIONS}
        )

    def test_perfect_predictions(self):
        preds = self._pred_set(1.0)
        targets = self._mask_set(1)
        assert float(multi_lesion_seg_loss(preds, targets, 10.0)) < 1e-4

    def test_one_lesion_differs_others_perfect(self):
        probs = {l: np.zeros((4, 4), dtype=np.float32) for l in LESIONS}
        masks = {l: np.zeros((4, 4), dtype=np.uint8) for l in LESIONS}
        masks["MA"][1, 1] = 1
        probs["MA"][1, 1] = 1.0
        loss = multi_lesion_seg_loss(
            LesionPredictionSet("a", probs), LesionMaskSet("a", masks), 10.0
        )
        assert float(loss) < 1e-4

    def test_uniform_half_on_empty_targets(self):
        loss = multi_lesion_seg_loss(self._pred_set(0.5), self._mask_set(0), 10.0)
        assert float(loss) == pytest.approx(math.log(2), rel=1e-6)

    def test_equals_mean_of_wbce(self):
        rng = np.random.default_rng(2)
        probs = {l: rng.random((5, 5)).astype(np.float32) for l in LESIONS}
        masks = {l: rng.integers(0, 2, (5, 5)).astype(np.uint8) for l in LESIONS}
        combined = multi_lesion_seg_loss(
            LesionPredictionSet("a", probs), LesionMaskSet("a", masks), 7.0
        )
        oracle = np.mean([float(wbce(probs[l], masks[l], 7.0)) for l in LESIONS])
        assert float(combined) == pytest.approx(oracle, rel=1e-6)

    def test_missing_lesion_key(self):
        probs = {l: np.zeros((2, 2), dtype=np.float32) for l in LESIONS}
        with pytest.raises(DataIntegrityError):
            LesionPredictionSet("a", {k: v for k, v in probs.items() if k != "SE"})


class TestSegmenterModel:
    def test_output_shape_and_range(self):
        torch.manual_seed(0)
        model = LesionSegmenter(depth=3, base_width=8)
        x = torch.rand(2, 3, 64, 64)
        out = model(x)
        assert out.shape == (2, 1, 64, 64)
        assert out.min() > 0.0 and out.max() < 1.0

    def test_shape_preserved_across_depths(self):
        for depth in (1, 2, 3):
            model = LesionSegmenter(depth=depth, base_width=8)
            out = model(torch.rand(1, 3, 32, 32))
            assert out.shape == (1, 1, 32, 32)

    def test_zeroed_head_gives_half(self):
        from funduslab.data.types import FundusImage

        model = LesionSegmenter(depth=2, base_width=8)
        torch.nn.init.zeros_(model.head.weight)
        torch.nn.init.zeros_(model.head.bias)
        model.eval()
        image = FundusImage(id="black", pixels=np.zeros((32, 32, 3), dtype=np.float32))
        out = model(image_to_tensor(image))
        assert torch.allclose(out, torch.full_like(out, 0.5))

    def test_per_image_auc_mode(self):
        from funduslab.data import make_synthetic
        from funduslab.evaluate import eval_seg_models

        torch.manual_seed(2)
        models = {l: LesionSegmenter(depth=2, base_width=8, lesion=l) for l in LESIONS}
        src, _ = make_synthetic(seed=6, n=6, size=64, domain_shift=0.0)
        pooled = eval_seg_models(models, list(src.test), pooled=True)
        per_image = eval_seg_models(models, list(src.test), pooled=False)
        for lesion in LESIONS:
            assert 0.0 <= per_image[lesion]["auc_pr"] <= 1.0
            assert 0.0 <= pooled[lesion]["auc_pr"] <= 1.0

    def test_predict_lesions_contract(self):
        from funduslab.data.types import FundusImage
        from funduslab.errors import ConfigError

        torch.manual_seed(1)
        models = {l: LesionSegmenter(depth=2, base_width=8, lesion=l) for l in LESIONS}
        image = FundusImage(id="x", pixels=np.random.default_rng(0).random((32, 32, 3)).astype(np.float32))
        preds = predict_lesions(models, image)
        assert set(preds.probs) == set(LESIONS)
        for arr in preds.probs.values():
            assert arr.shape == (32, 32)
            assert arr.min() >= 0.0 and arr.max() <= 1.0
        again = predict_lesions(models, image)
        for lesion in LESIONS:
            assert np.array_equal(preds.probs[lesion], again.probs[lesion])
        with pytest.raises(ConfigError):
            predict_lesions({k: v for k, v in models.items() if k != "MA"}, image)
