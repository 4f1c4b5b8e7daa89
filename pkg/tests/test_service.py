import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from funduslab.service import Workspace, create_app


def png_bytes(seed: int = 0, size: int = 64) -> bytes:
    rng = np.random.default_rng(seed)
    arr = (rng.random((size, size, 3)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture()
def client(tmp_path, tiny_config, tiny_system):
    workspace = Workspace(tmp_path / "ws", tiny_config, system=tiny_system)
    app = create_app(workspace)
    with TestClient(app) as c:
        yield c, workspace
    workspace.shutdown()


def wait_for_job(client, job_id: str, timeout: float = 120.0) -> dict:
    deadline = time.time() + timeout
    last = None
    while time.time() < deadline:
        last = client.get(f"/jobs/{job_id}").json()
        if last["state"] in ("done", "failed"):
            return last
        time.sleep(0.3)
    raise TimeoutError(f"job stuck: {last}")


class TestCases:
    def test_upload_and_bundle(self, client):
        c, _ = client
        r = c.post("/cases", files={"file": ("a.png", png_bytes(1), "image/png")})
        assert r.status_code == 201
        case_id = r.json()["case_id"]

        bundle = c.get(f"/cases/{case_id}/bundle").json()
        assert len(bundle["probs"]) == 5
        assert abs(sum(bundle["probs"]) - 1.0) < 1e-6
        assert bundle["model_version"] == "v1"
        assert "cam" in bundle["overlay_urls"]

        overlay = c.get(bundle["overlay_urls"]["cam"])
        assert overlay.status_code == 200
        assert overlay.headers["content-type"] == "image/png"

    def test_duplicate_upload_new_case(self, client):
        c, _ = client
        payload = png_bytes(2)
        a = c.post("/cases", files={"file": ("a.png", payload, "image/png")}).json()
        b = c.post("/cases", files={"file": ("a.png", payload, "image/png")}).json()
        assert a["case_id"] != b["case_id"]

    def test_idempotency_key_replays(self, client):
        c, _ = client
        headers = {"X-Idempotency-Key": "same-upload"}
        a = c.post("/cases", files={"file": ("a.png", png_bytes(3), "image/png")}, headers=headers).json()
        b = c.post("/cases", files={"file": ("b.png", png_bytes(4), "image/png")}, headers=headers).json()
        assert a["case_id"] == b["case_id"]

    def test_corrupt_payload_400(self, client):
        c, workspace = client
        before = set(workspace.cases)
        r = c.post("/cases", files={"file": ("x.png", b"not an image", "image/png")})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_image"
        assert set(workspace.cases) == before

    def test_unknown_case_404(self, client):
        c, _ = client
        r = c.get("/cases/nope/bundle")
        assert r.status_code == 404
        assert r.json() == {"code": "unknown_case", "message": "no case nope", "stage": "lookup"}


class TestFeedback:
    def _case(self, c) -> str:
        return c.post("/cases", files={"file": ("a.png", png_bytes(5), "image/png")}).json()["case_id"]

    def test_submit_accept(self, client):
        c, _ = client
        case_id = self._case(c)
        payload = {
            "geometries": [
                {"kind": "box", "lesion": "HE", "coordinates": [[4, 4], [12, 12]]}
            ],
            "corrected_grade": 2,
            "reviewer": "dr-b",
        }
        r = c.post(f"/cases/{case_id}/feedback", json=payload)
        assert r.status_code == 201
        record_id = r.json()["record_id"]
        assert r.json()["status"] == "pending"

        accepted = c.post(f"/feedback/{record_id}/accept").json()
        assert accepted["status"] == "accepted"

        # case flips to reviewed
        bundle = c.get(f"/cases/{case_id}/bundle").json()
        assert bundle["review_state"] == "reviewed"

    def test_empty_feedback_422(self, client):
        c, _ = client
        case_id = self._case(c)
        r = c.post(f"/cases/{case_id}/feedback", json={"reviewer": "dr-b"})
        assert r.status_code == 422

    def test_feedback_idempotency(self, client):
        c, _ = client
        case_id = self._case(c)
        payload = {"corrected_grade": 1}
        headers = {"X-Idempotency-Key": "fb-once"}
        a = c.post(f"/cases/{case_id}/feedback", json=payload, headers=headers).json()
        b = c.post(f"/cases/{case_id}/feedback", json=payload, headers=headers).json()
        assert a["record_id"] == b["record_id"]


class TestJobs:
    def test_finetune_cycle_and_versioning(self, client):
        c, workspace = client
        case_id = c.post("/cases", files={"file": ("a.png", png_bytes(6), "image/png")}).json()["case_id"]
        bundle_v1 = c.get(f"/cases/{case_id}/bundle").json()
        assert bundle_v1["model_version"] == "v1"

        payload = {
            "geometries": [
                {"kind": "box", "lesion": "MA", "coordinates": [[8, 8], [20, 20]]}
            ],
            "corrected_grade": 3,
        }
        record_id = c.post(f"/cases/{case_id}/feedback", json=payload).json()["record_id"]
        c.post(f"/feedback/{record_id}/accept")

        job = c.post("/jobs/finetune", json={"kind": "seg_finetune"}).json()
        final = wait_for_job(c, job["job_id"])
        assert final["state"] == "done"
        assert final["progress"] == 1.0
        assert final["model_version"] == 2

        models = c.get("/models").json()["models"]
        assert [m["version"] for m in models] == [1, 2]
        assert models[1]["parent"] == 1

        # consumed record cannot be consumed again
        job2 = c.post("/jobs/finetune", json={"kind": "seg_finetune"}).json()
        final2 = wait_for_job(c, job2["job_id"])
        assert final2["state"] == "failed"
        assert "no accepted feedback" in final2["message"]

        # regenerated bundle cites the new version
        bundle_v2 = c.get(f"/cases/{case_id}/bundle").json()
        assert bundle_v2["model_version"] == "v2"

    def test_zero_records_fails_fast(self, client):
        c, _ = client
        job = c.post("/jobs/finetune", json={"kind": "grade_finetune"}).json()
        final = wait_for_job(c, job["job_id"])
        assert final["state"] == "failed"
        assert "no accepted feedback" in final["message"]

    def test_unknown_kind_422(self, client):
        c, _ = client
        r = c.post("/jobs/finetune", json={"kind": "mystery"})
        assert r.status_code == 422

    def test_unknown_job_404(self, client):
        c, _ = client
        assert c.get("/jobs/nope").status_code == 404

    def test_progress_monotone(self, client):
        c, workspace = client
        case_id = c.post("/cases", files={"file": ("a.png", png_bytes(7), "image/png")}).json()["case_id"]
        record_id = c.post(f"/cases/{case_id}/feedback", json={"corrected_grade": 2}).json()["record_id"]
        c.post(f"/feedback/{record_id}/accept")
        job = c.post("/jobs/finetune", json={"kind": "grade_finetune"}).json()
        seen = [job["progress"]]
        deadline = time.time() + 120
        while time.time() < deadline:
            state = c.get(f"/jobs/{job['job_id']}").json()
            seen.append(state["progress"])
            if state["state"] in ("done", "failed"):
                break
            time.sleep(0.1)
        assert state["state"] == "done"
        assert all(b >= a for a, b in zip(seen, seen[1:]))


class TestRecovery:
    def test_crash_recovery_drops_orphans(self, tmp_path, tiny_config, tiny_system):
        ws_dir = tmp_path / "ws"
        workspace = Workspace(ws_dir, tiny_config, system=tiny_system)
        case = workspace.add_case(png_bytes(8))
        workspace.shutdown()

        # simulate a crash that wrote a checkpoint but never logged it
        orphan = ws_dir / "models" / "system-v99.ckpt"
        orphan.write_bytes(b"half-written")

        recovered = Workspace(ws_dir, tiny_config)
        assert not orphan.exists()
        assert [e.version for e in recovered.registry] == [1]
        assert case.case_id in recovered.cases
        recovered.shutdown()

    def test_feedback_status_replay(self, tmp_path, tiny_config, tiny_system):
        from funduslab.feedback.records import FeedbackRecord

        ws_dir = tmp_path / "ws"
        workspace = Workspace(ws_dir, tiny_config, system=tiny_system)
        case = workspace.add_case(png_bytes(9))
        record = workspace.add_feedback(case.case_id, FeedbackRecord(case_id=case.case_id, corrected_grade=1))
        workspace.accept_feedback(record.record_id)
        workspace.shutdown()

        recovered = Workspace(ws_dir, tiny_config)
        assert recovered.feedback[record.record_id].status == "accepted"
        recovered.shutdown()

    def test_interrupted_job_surfaces_failed(self, tmp_path, tiny_config, tiny_system):
        import json

        ws_dir = tmp_path / "ws"
        workspace = Workspace(ws_dir, tiny_config, system=tiny_system)
        workspace.shutdown()
        with open(ws_dir / "jobs.jsonl", "a") as fh:
            fh.write(json.dumps({"job_id": "job-crashed", "kind": "seg_finetune",
                                 "state": "running", "progress": 0.4}) + "\n")
        recovered = Workspace(ws_dir, tiny_config)
        assert recovered.jobs["job-crashed"].state == "failed"
        recovered.shutdown()
