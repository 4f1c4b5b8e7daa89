"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Closed-form oracles, gradient checks, and ordering studies at pinned
desk-scale seeds. Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import io
import math
import time
import zipfile

import numpy as np
import pytest
import torch
import torch.nn as nn

from funduslab import desk
from funduslab.config import LESIONS, TrainingConfig


def report(criterion: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {criterion}" + (f" :: {detail}" if detail else ""))
    assert ok, f"{criterion} failed: {detail}"


class TestC01LossOracles:
    """wbce / entropy / self-information / overlap / threshold / total
    objective against hand or loop oracles within 1e-6, under 10 s."""

    def test_loss_oracles(self):
        from funduslab.explain import grading_total, overlap_loss, threshold_map
        from funduslab.seg import wbce
        from funduslab.uda import UdaWeights, entropy_map, self_information_map, total_objective

        t0 = time.time()
        checks = []

        checks.append(abs(float(wbce(torch.tensor([0.5]), torch.tensor([1.0]), 10.0))
                          - 10 * math.log(2)) < 1e-6)
        checks.append(abs(float(wbce(torch.tensor([0.5]), torch.tensor([0.0]), 10.0))
                          - math.log(2)) < 1e-6)

        probs = np.zeros((1, 1, 2))
        probs[0, 0] = (0.9, 0.1)
        expected_ent = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1)) / math.log(2)
        checks.append(abs(entropy_map(probs)[0, 0] - expected_ent) < 1e-6)

        half = np.full((1, 1, 2), 0.5)
        checks.append(abs(self_information_map(half)[0, 0, 0] - 0.5 * math.log(2)) < 1e-6)

        # loop oracle for overlap on random maps
        rng = np.random.default_rng(0)
        tam = rng.random((6, 6))
        union = rng.integers(0, 2, (6, 6)).astype(float)
        loop = math.sqrt(sum((tam[i, j] - union[i, j]) ** 2 for i in range(6) for j in range(6))) / 36
        checks.append(abs(overlap_loss(tam, union, 6, 6) - loop) < 1e-6)
        checks.append(abs(overlap_loss(np.zeros((2, 2)), np.ones((2, 2)), 2, 2) - 0.5) < 1e-6)

        checks.append(abs(threshold_map(np.array([[0.5]]), 0.5, 100.0)[0, 0] - 0.5) < 1e-6)
        expected_gate = 1.0 / (1.0 + math.exp(-10.0))
        checks.append(abs(threshold_map(np.array([[0.6]]), 0.5, 100.0)[0, 0] - expected_gate) < 1e-6)

        w = UdaWeights(lambda_p=1e-2, lambda_w=1e-3, lambda_adv=1e-3)
        checks.append(abs(float(total_objective(1.0, 1.0, 1.0, 1.0, w)) - 1.012) < 1e-6)
        checks.append(abs(float(grading_total(0.7, 0.3)) - 1.0) < 1e-6)

        elapsed = time.time() - t0
        report("C1 loss oracles (1e-6)", all(checks) and elapsed < 10,
               f"{sum(checks)}/{len(checks)} oracles, {elapsed:.1f}s")


class TestC02GradientChecks:
    """Central finite differences (step 1e-4) within relative 1e-3."""

    @staticmethod
    def _fd_check(fn, tensor, indices, step=1e-4, rtol=1e-3) -> bool:
        loss = fn(tensor)
        (analytic,) = torch.autograd.grad(loss, tensor)
        with torch.no_grad():
            for idx in indices:
                bumped = tensor.detach().clone()
                bumped[idx] += step
                hi = float(fn(bumped))
                bumped[idx] -= 2 * step
                lo = float(fn(bumped))
                fd = (hi - lo) / (2 * step)
                ref = float(analytic[idx])
                if abs(fd - ref) > rtol * max(abs(ref), 1e-8):
                    return False
        return True

    def test_gradient_checks(self):
        from funduslab.explain import overlap_loss
        from funduslab.grading import GradingCNN, LesionAttention, attention_cls_loss
        from funduslab.data.types import GradeLabel
        from funduslab.seg import wbce
        from funduslab.uda import PatchDiscriminator, patch_adv_loss
        from funduslab.uda.losses import _clog

        t0 = time.time()
        checks = {}

        torch.manual_seed(0)
        target = (torch.rand(8, 8) > 0.7).double()
        pred = (torch.rand(8, 8, dtype=torch.float64) * 0.8 + 0.1).requires_grad_(True)
        checks["wbce"] = self._fd_check(
            lambda p: wbce(p, target, 10.0), pred, [(0, 0), (3, 5), (7, 7)]
        )

        union = (torch.rand(8, 8) > 0.5).double()
        tam = (torch.rand(8, 8, dtype=torch.float64) * 0.8 + 0.1).requires_grad_(True)
        checks["overlap"] = self._fd_check(
            lambda t: overlap_loss(t, union, 8, 8), tam, [(0, 0), (4, 4), (7, 1)]
        )

        # attention classification loss wrt a gate parameter
        torch.manual_seed(1)
        model = GradingCNN(widths=(4, 8, 8, 16, 16)).double()
        attn = LesionAttention(4, 16).double()
        rng = np.random.default_rng(2)
        batch = [
            (
                torch.rand(3, 32, 32, dtype=torch.float64),
                {l: torch.from_numpy(rng.random((1, 1, 32, 32))) for l in LESIONS},
                GradeLabel(f"i{k}", k + 1),
            )
            for k in range(2)
        ]
        param = attn.w_last["HE"].weight
        loss = attention_cls_loss(model, attn, batch)
        loss.backward()
        analytic = float(param.grad[0, 0, 0, 0])
        step = 1e-4
        with torch.no_grad():
            param[0, 0, 0, 0] += step
        hi = float(attention_cls_loss(model, attn, batch).detach())
        with torch.no_grad():
            param[0, 0, 0, 0] -= 2 * step
        lo = float(attention_cls_loss(model, attn, batch).detach())
        fd = (hi - lo) / (2 * step)
        checks["attention_cls"] = abs(fd - analytic) <= 1e-3 * max(abs(analytic), 1e-8)

        # patch-adversarial generator term wrt the prediction
        torch.manual_seed(3)
        pd = PatchDiscriminator(patch_size=4, patch_grid=4).double()
        image = torch.rand(3, 16, 16, dtype=torch.float64)
        gt = (torch.rand(1, 16, 16) > 0.5).double()
        pred16 = (torch.rand(1, 16, 16, dtype=torch.float64) * 0.8 + 0.1).requires_grad_(True)
        checks["patch_gen"] = self._fd_check(
            lambda p: patch_adv_loss(pd, image, p, gt)[1],
            pred16,
            [(0, 0, 0), (0, 8, 8), (0, 15, 15)],
        )

        # domain-adversarial generator term wrt the self-information map
        from funduslab.uda import EntropyDiscriminator

        torch.manual_seed(4)
        ad = EntropyDiscriminator(in_channels=2).double()
        imap = (torch.rand(1, 2, 8, 8, dtype=torch.float64) * 0.3).requires_grad_(True)
        checks["domain_gen"] = self._fd_check(
            lambda m: -_clog(ad(m)).mean(), imap, [(0, 0, 0, 0), (0, 1, 4, 4)]
        )

        elapsed = time.time() - t0
        report("C2 gradient checks (fd 1e-4, rel 1e-3)",
               all(checks.values()) and elapsed < 60,
               f"{checks}, {elapsed:.1f}s")


class TestC03Wasserstein:
    def test_wasserstein_machinery(self):
        from funduslab.uda import gradient_penalty, wasserstein_loss

        t0 = time.time()
        torch.manual_seed(5)
        net = nn.Sequential(nn.Linear(4, 8), nn.ReLU(), nn.Linear(8, 1))
        critic = lambda v: net(v).squeeze(-1)
        h_s, h_t = torch.rand(6, 4), torch.rand(6, 4)
        with torch.no_grad():
            antisym = abs(
                float(wasserstein_loss(critic, h_s, h_t))
                + float(wasserstein_loss(critic, h_t, h_s))
            ) < 1e-6

        unit = torch.tensor([0.6, 0.8])
        gp_unit = float(gradient_penalty(lambda v: v @ unit, torch.rand(4, 2), torch.rand(4, 2), seed=0))
        heavy = torch.tensor([3.0, 4.0])
        gp_heavy = float(gradient_penalty(lambda v: v @ heavy, torch.rand(5, 2), torch.rand(5, 2), seed=1))

        elapsed = time.time() - t0
        ok = antisym and gp_unit < 1e-10 and abs(gp_heavy - 16.0) < 1e-5 and elapsed < 5
        report("C3 Wasserstein machinery", ok,
               f"antisym={antisym} gp_unit={gp_unit:.2e} gp_34={gp_heavy:.6f}, {elapsed:.1f}s")


class TestC04MetricOracles:
    def test_metric_oracles(self):
        from funduslab.metrics import ConfusionMatrix, ScoredPixels, auc_pr, auc_roc, quadratic_kappa
        from test_metrics import kappa_double_loop_oracle, pr_sweep_oracle, roc_pairwise_oracle

        t0 = time.time()
        rng = np.random.default_rng(42)
        ok = True
        for _ in range(100):
            scores = np.round(rng.random(50), 2)
            labels = rng.integers(0, 2, 50)
            if labels.sum() in (0, 50):
                labels[0] = 1 - labels[0]
            sp = ScoredPixels(scores, labels)
            ok &= abs(auc_roc(sp) - roc_pairwise_oracle(scores, labels)) < 1e-9
            ok &= abs(auc_pr(sp) - pr_sweep_oracle(scores, labels)) < 1e-9
        for _ in range(100):
            counts = rng.integers(0, 20, (5, 5))
            counts[0, 0] += 1
            counts[1, 2] += 1
            cm = ConfusionMatrix(counts)
            ok &= abs(quadratic_kappa(cm) - kappa_double_loop_oracle(counts)) < 1e-9
        elapsed = time.time() - t0
        report("C4 metric oracles (1e-9, 100 instances each)", ok and elapsed < 30,
               f"{elapsed:.1f}s")


class TestC05Rollout:
    def test_rollout(self):
        from funduslab.explain import attention_rollout

        t0 = time.time()
        uniform = attention_rollout([np.array([[0.5, 0.5], [0.5, 0.5]])])
        case_ok = np.allclose(uniform, [[0.75, 0.25], [0.25, 0.75]], atol=1e-12)

        rng = np.random.default_rng(7)
        mats = []
        for _ in range(3):
            raw = rng.random((5, 5))
            mats.append(raw / raw.sum(axis=1, keepdims=True))
        out = attention_rollout(mats)
        expected = np.eye(5)
        for m in mats:
            aug = m + np.eye(5)
            expected = (aug / aug.sum(axis=1, keepdims=True)) @ expected
        oracle_ok = np.allclose(out, expected, atol=1e-12)
        stochastic_ok = np.abs(out.sum(axis=1) - 1.0).max() < 1e-5
        elapsed = time.time() - t0
        report("C5 attention rollout", case_ok and oracle_ok and stochastic_ok and elapsed < 5,
               f"uniform={case_ok} oracle={oracle_ok} row_stochastic={stochastic_ok}, {elapsed:.1f}s")


class TestC06AblationOrdering:
    """Desk-scale ordering studies at pinned seeds, total under 15 min."""

    def test_a_pretraining_lowers_validation_loss(self):
        from funduslab.data.types import DatasetSplit
        from funduslab.metriclog import MetricLog
        from funduslab.uda import train_source_models

        t0 = time.time()
        config = desk.pretrain_config(seed=0)
        data = desk.grading_data(seed=0)
        data = DatasetSplit(data.name, data.train[:24], data.test)

        def final_val_mean(log: MetricLog) -> float:
            per = {}
            for row in log.rows:
                if "val_loss" in row:
                    per[row["lesion"]] = row["val_loss"]
            return float(np.mean(list(per.values())))

        log_plain, log_tatl = MetricLog(), MetricLog()
        train_source_models(data, config, use_pretext=False, use_patch_adv=False, log=log_plain)
        train_source_models(data, config, use_pretext=True, use_patch_adv=True, log=log_tatl)
        plain, tatl = final_val_mean(log_plain), final_val_mean(log_tatl)
        report("C6a pretext+patch-adversarial pretraining lowers validation loss",
               tatl < plain, f"plain={plain:.4f} pretrained={tatl:.4f}, {time.time()-t0:.0f}s")

    def test_b_adaptation_ordering(self):
        t0 = time.time()
        results = desk.run_uda_reference(seed=0)
        r = {v: results[v]["mean_auc_pr"] for v in results}
        ordered = r["none"] < r["entropy"] <= r["adnet"] <= r["full"]
        margin = r["full"] - r["none"] >= 0.05
        report(
            "C6b target AUC-PR ordering none < entropy <= adnet <= full (+0.05)",
            ordered and margin,
            " ".join(f"{k}={v:.4f}" for k, v in r.items()) + f", {time.time()-t0:.0f}s",
        )

    def test_c_attention_kappa_ordering(self):
        from funduslab.evaluate import eval_grading
        from funduslab.pipeline import train_system
        from funduslab.uda import train_source_models

        t0 = time.time()
        config = desk.grading_config(seed=0)
        data = desk.grading_data(seed=0)
        seg = train_source_models(data, config)
        plain = train_system(data, config, use_attention=False, seg_models=seg)
        two_level = train_system(data, config, use_attention=True, use_overlap=True, seg_models=seg)
        test = list(data.test)
        k_plain = eval_grading(lambda s: plain.grade(s.image).grade, test)["kappa"]
        k_att = eval_grading(lambda s: two_level.grade(s.image).grade, test)["kappa"]
        report("C6c grading kappa ordering plain <= two-level attention",
               k_att >= k_plain, f"plain={k_plain:.4f} attention={k_att:.4f}, {time.time()-t0:.0f}s")


class TestC07FeedbackSimulation:
    def test_schedule_partition(self):
        from funduslab.feedback import build_schedule

        ids = [f"im{i}" for i in range(100)]
        schedule = build_schedule(ids, seed=0)
        sizes_ok = len(schedule.base_ids) == 50 and [len(s) for s in schedule.slices] == [10] * 5
        everything = list(schedule.base_ids) + [i for s in schedule.slices for i in s]
        partition_ok = sorted(everything) == sorted(ids)
        report("C7 schedule partition 100 -> 50 + 5x10", sizes_ok and partition_ok)

    def test_morphology_properties(self):
        from funduslab.feedback import dilate, erode

        rng = np.random.default_rng(1)
        ok = True
        for _ in range(20):
            mask = (rng.random((16, 16)) > 0.7).astype(np.uint8)
            ok &= bool(np.all(dilate(mask, 3) >= mask))
            ok &= bool(np.all(erode(mask, 3) <= mask))
        mask = np.zeros((20, 20), dtype=np.uint8)
        mask[6:14, 5:15] = 1
        ok &= bool(np.array_equal(dilate(mask, 3), dilate(erode(dilate(mask, 3), 3), 3)))
        report("C7 morphology extensivity / anti-extensivity", ok)

    def test_simulation_trend(self):
        from funduslab.feedback import build_schedule, run_simulation

        t0 = time.time()
        config = desk.simulation_config(seed=0)
        data = desk.simulation_data(seed=0)
        schedule = build_schedule([s.image.id for s in data.train], seed=config.seed)
        log = run_simulation(data, schedule, config.noise_kernel, config)
        acc = log.column("accuracy")
        increments = sum(1 for i in range(5) if acc[i + 1] >= acc[i])
        elapsed = time.time() - t0
        report(
            "C7 simulation accuracy non-decreasing in >= 4 of 5 increments",
            increments >= 4 and elapsed < 600,
            f"accuracy={['%.3f' % a for a in acc]} increments={increments}, {elapsed:.0f}s",
        )


class TestC08ExplanationInvariants:
    def test_overlap_zero_iff_equal(self):
        from funduslab.explain import overlap_loss

        rng = np.random.default_rng(2)
        a = rng.random((5, 5))
        ok = overlap_loss(a, a.copy(), 5, 5) == 0.0
        b = a.copy()
        b[2, 2] += 1e-7
        ok &= overlap_loss(a, b, 5, 5) > 0.0
        report("C8 overlap_loss zero iff equal", bool(ok))

    def test_explanation_score_oracle(self):
        from funduslab.explain import explanation_score

        rng = np.random.default_rng(3)
        ok = True
        for _ in range(20):
            a = rng.integers(0, 2, (16, 16))
            b = rng.integers(0, 2, (16, 16))
            inter = int(np.logical_and(a, b).sum())
            union = int(np.logical_or(a, b).sum())
            expected = 1.0 if union == 0 else inter / union
            ok &= abs(explanation_score(a, b) - expected) < 1e-12
            ok &= explanation_score(a, b) == explanation_score(b, a)
        report("C8 explanation score equals count oracle", bool(ok))

    def test_bundle_determinism(self, tiny_system, tmp_path):
        from funduslab.data import make_synthetic
        from funduslab.explain import write_bundle

        src, _ = make_synthetic(seed=9, n=4, size=64, domain_shift=0.0)
        image = src.train[0].image
        a, b = tmp_path / "a", tmp_path / "b"
        write_bundle(tiny_system.bundle(image), image, a)
        write_bundle(tiny_system.bundle(image), image, b)
        files = sorted(p.name for p in a.iterdir())
        identical = files == sorted(p.name for p in b.iterdir()) and all(
            (a / name).read_bytes() == (b / name).read_bytes() for name in files
        )
        report("C8 build_bundle byte-identical on repeat", identical, f"{len(files)} files")

    def test_grade_zero_guard(self, tiny_system, tiny_config):
        from funduslab.data import make_synthetic
        from funduslab.explain.bundle import union_lesions
        from funduslab.grading.attention import lesion_maps_to_tensors
        from funduslab.grading.train import grading_item_loss
        from funduslab.seg.models import image_to_tensor

        src, _ = make_synthetic(seed=10, n=4, size=64, domain_shift=0.0)
        sample = src.train[0]
        lesions = tiny_system.lesions(sample.image)
        maps = lesion_maps_to_tensors(lesions)
        union = union_lesions(lesions, tiny_config.lesion_bin_threshold)
        x = image_to_tensor(sample.image)

        _, used_zero = grading_item_loss(
            tiny_system.grading, tiny_system.attn, x, maps, 0, union, tiny_config
        )
        _, used_nonzero = grading_item_loss(
            tiny_system.grading, tiny_system.attn, x, maps, 2, union, tiny_config
        )
        report("C8 overlap term absent for grade-0 samples",
               (not used_zero) and used_nonzero)


class TestC09ServiceIntegration:
    def test_full_loop_and_recovery(self, tmp_path, tiny_config, tiny_system):
        from fastapi.testclient import TestClient

        from funduslab.service import Workspace, create_app
        from test_service import png_bytes, wait_for_job

        t0 = time.time()
        ws_dir = tmp_path / "ws"
        workspace = Workspace(ws_dir, tiny_config, system=tiny_system)
        with TestClient(create_app(workspace)) as client:
            case_id = client.post(
                "/cases", files={"file": ("u.png", png_bytes(11), "image/png")}
            ).json()["case_id"]
            bundle1 = client.get(f"/cases/{case_id}/bundle").json()
            record_id = client.post(
                f"/cases/{case_id}/feedback",
                json={
                    "geometries": [
                        {"kind": "box", "lesion": "EX", "coordinates": [[5, 5], [18, 18]]}
                    ],
                    "corrected_grade": 2,
                },
            ).json()["record_id"]
            client.post(f"/feedback/{record_id}/accept")
            job = client.post("/jobs/finetune", json={"kind": "seg_finetune"}).json()
            final = wait_for_job(client, job["job_id"])
            versions = [m["version"] for m in client.get("/models").json()["models"]]
            bundle2 = client.get(f"/cases/{case_id}/bundle").json()
        workspace.shutdown()

        loop_ok = (
            bundle1["model_version"] == "v1"
            and final["state"] == "done"
            and versions == [1, 2]
            and bundle2["model_version"] == "v2"
        )

        # crash-recovery replay drops unreferenced checkpoints
        orphan = ws_dir / "models" / "system-v9.ckpt"
        orphan.write_bytes(b"partial")
        recovered = Workspace(ws_dir, tiny_config)
        recovery_ok = not orphan.exists() and [e.version for e in recovered.registry] == [1, 2]
        consumed_ok = all(
            r.status == "consumed" for r in recovered.feedback.values()
        )
        recovered.shutdown()

        elapsed = time.time() - t0
        report(
            "C9 service loop + crash recovery",
            loop_ok and recovery_ok and consumed_ok and elapsed < 300,
            f"loop={loop_ok} recovery={recovery_ok} consumed={consumed_ok}, {elapsed:.0f}s",
        )
