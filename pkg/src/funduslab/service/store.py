"""File-backed workspace: cases, feedback log, model registry, job queue.

Everything durable is an append-only JSONL log plus checkpoint archives;
recovery replays the logs and drops checkpoints no log row references.
One worker thread executes jobs FIFO, and a single lock guards mutation,
so request handlers can run concurrently.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..config import TrainingConfig
from ..data.preprocess import preprocess
from ..data.types import FundusImage
from ..errors import ConfigError, StateError
from ..feedback.records import FeedbackRecord
from ..metriclog import MetricLog
from ..pipeline import TrainedSystem, load_system, save_system

JOB_KINDS = ("seg_finetune", "grade_finetune", "uda", "simulation")


@dataclass
class CaseRecord:
    case_id: str
    image_path: str
    review_state: str = "unreviewed"
    bundle_version: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "image_path": self.image_path,
            "review_state": self.review_state,
            "bundle_version": self.bundle_version,
        }


@dataclass
class TrainJob:
    job_id: str
    kind: str
    state: str = "queued"
    progress: float = 0.0
    message: str = ""
    model_version: Optional[int] = None
    metric_tail: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": round(self.progress, 4),
            "message": self.message,
            "model_version": self.model_version,
            "metric_tail": self.metric_tail[-10:],
        }


@dataclass
class RegistryEntry:
    lineage: str
    version: int
    checkpoint: str
    parent: Optional[int]
    created: str

    def to_dict(self) -> dict:
        return {
            "lineage": self.lineage,
            "version": self.version,
            "checkpoint": self.checkpoint,
            "parent": self.parent,
            "created": self.created,
        }


def _append_jsonl(path: Path, row: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    if path.exists():
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
    return rows


class Workspace:
    """All service state under one directory."""

    LINEAGE = "system"

    def __init__(self, root: str | Path, config: TrainingConfig, system: Optional[TrainedSystem] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.lock = threading.RLock()
        self.executor = ThreadPoolExecutor(max_workers=1)

        self.cases: dict[str, CaseRecord] = {}
        self.feedback: dict[str, FeedbackRecord] = {}
        self.jobs: dict[str, TrainJob] = {}
        self.registry: list[RegistryEntry] = []
        self.idempotency: dict[str, dict] = {}
        self._running_lineages: set[str] = set()
        self._system: Optional[TrainedSystem] = None

        self.recover()
        if not self.registry:
            if system is None:
                raise ConfigError("fresh workspace needs an initial trained system")
            self._register_version(system, parent=None)
        self._system = load_system(self.root / self.latest().checkpoint)

    # ------------------------------------------------------------- registry

    def latest(self) -> RegistryEntry:
        return self.registry[-1]

    @property
    def system(self) -> TrainedSystem:
        return self._system

    def _register_version(self, system: TrainedSystem, parent: Optional[int]) -> RegistryEntry:
        import datetime as dt

        version = (self.registry[-1].version + 1) if self.registry else 1
        name = f"models/{self.LINEAGE}-v{version}.ckpt"
        save_system(system, self.root / name)
        entry = RegistryEntry(
            lineage=self.LINEAGE,
            version=version,
            checkpoint=name,
            parent=parent,
            created=dt.datetime.now(dt.timezone.utc).isoformat(),
        )
        _append_jsonl(self.root / "models" / "registry.jsonl", entry.to_dict())
        self.registry.append(entry)
        self._system = system
        return entry

    def recover(self) -> None:
        """Replay the append logs; drop checkpoints no registry row names."""
        self.registry = [
            RegistryEntry(**row) for row in _read_jsonl(self.root / "models" / "registry.jsonl")
        ]
        referenced = {self.root / e.checkpoint for e in self.registry}
        models_dir = self.root / "models"
        if models_dir.exists():
            for ckpt in models_dir.glob("*.ckpt"):
                if ckpt not in referenced:
                    ckpt.unlink()

        self.cases = {}
        for row in _read_jsonl(self.root / "cases.jsonl"):
            self.cases[row["case_id"]] = CaseRecord(**row)

        self.feedback = {}
        for row in _read_jsonl(self.root / "feedback.jsonl"):
            if row.get("event") == "status":
                record = self.feedback.get(row["record_id"])
                if record is not None:
                    record.status = row["status"]
            else:
                record = FeedbackRecord.from_dict(row)
                self.feedback[record.record_id] = record

        self.idempotency = {}
        for row in _read_jsonl(self.root / "idempotency.jsonl"):
            self.idempotency[row["key"]] = row["response"]

        # jobs interrupted by a crash surface as failed
        self.jobs = {}
        for row in _read_jsonl(self.root / "jobs.jsonl"):
            job = self.jobs.setdefault(row["job_id"], TrainJob(row["job_id"], row.get("kind", "")))
            job.kind = row.get("kind", job.kind)
            job.state = row.get("state", job.state)
            job.message = row.get("message", job.message)
            job.model_version = row.get("model_version", job.model_version)
            job.progress = row.get("progress", job.progress)
        for job in self.jobs.values():
            if job.state in ("queued", "running"):
                job.state = "failed"
                job.message = "interrupted by restart"

    # ---------------------------------------------------------------- cases

    def _check_idempotent(self, key: Optional[str]) -> Optional[dict]:
        if key is None:
            return None
        return self.idempotency.get(key)

    def _store_idempotent(self, key: Optional[str], response: dict) -> None:
        if key is None:
            return
        self.idempotency[key] = response
        _append_jsonl(self.root / "idempotency.jsonl", {"key": key, "response": response})

    def add_case(self, payload: bytes, idempotency_key: Optional[str] = None) -> CaseRecord:
        with self.lock:
            cached = self._check_idempotent(idempotency_key)
            if cached is not None:
                return self.cases[cached["case_id"]]
            try:
                with Image.open(io.BytesIO(payload)) as img:
                    raw = np.asarray(img.convert("RGB"))
            except (UnidentifiedImageError, OSError) as exc:
                raise ValueError(f"payload does not decode as an image: {exc}") from exc
            case_id = f"case-{uuid.uuid4().hex[:12]}"
            image = preprocess(raw, self.config.canonical_size, image_id=case_id, domain="target")
            case_dir = self.root / "cases" / case_id
            case_dir.mkdir(parents=True, exist_ok=True)
            arr = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(case_dir / "image.png")
            record = CaseRecord(case_id=case_id, image_path=f"cases/{case_id}/image.png")
            self.cases[case_id] = record
            _append_jsonl(self.root / "cases.jsonl", record.to_dict())
            self._store_idempotent(idempotency_key, {"case_id": case_id})
            return record

    def load_case_image(self, case_id: str) -> FundusImage:
        record = self.cases[case_id]
        with Image.open(self.root / record.image_path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        return FundusImage(id=case_id, pixels=pixels, domain="target")

    def bundle_dir(self, case_id: str, version: int) -> Path:
        return self.root / "cases" / case_id / "bundles" / f"v{version}"

    def get_bundle_record(self, case_id: str) -> dict:
        """Bundle metadata for the latest model version, computed on demand
        and cached by (case, version)."""
        if case_id not in self.cases:
            raise KeyError(case_id)
        version = self.latest().version
        out_dir = self.bundle_dir(case_id, version)
        meta = out_dir / "bundle.json"
        if not meta.exists():
            from ..explain.bundle import write_bundle

            with self.lock:
                if not meta.exists():
                    image = self.load_case_image(case_id)
                    bundle = self.system.bundle(image)
                    write_bundle(bundle, image, out_dir, model_version=f"v{version}")
                    self.cases[case_id].bundle_version = version
        return json.loads(meta.read_text())

    # ------------------------------------------------------------- feedback

    def add_feedback(
        self, case_id: str, record: FeedbackRecord, idempotency_key: Optional[str] = None
    ) -> FeedbackRecord:
        with self.lock:
            cached = self._check_idempotent(idempotency_key)
            if cached is not None:
                return self.feedback[cached["record_id"]]
            if case_id not in self.cases:
                raise KeyError(case_id)
            record.record_id = f"fb-{uuid.uuid4().hex[:12]}"
            record.case_id = case_id
            self.feedback[record.record_id] = record
            _append_jsonl(self.root / "feedback.jsonl", record.to_dict())
            self.cases[case_id].review_state = "reviewed"
            _append_jsonl(self.root / "cases.jsonl", self.cases[case_id].to_dict())
            self._store_idempotent(idempotency_key, {"record_id": record.record_id})
            return record

    def accept_feedback(self, record_id: str) -> FeedbackRecord:
        with self.lock:
            record = self.feedback[record_id]
            if record.status == "pending":
                record.advance("accepted")
                _append_jsonl(
                    self.root / "feedback.jsonl",
                    {"event": "status", "record_id": record_id, "status": "accepted"},
                )
            return record

    def _mark_consumed(self, records: list[FeedbackRecord]) -> None:
        for record in records:
            _append_jsonl(
                self.root / "feedback.jsonl",
                {"event": "status", "record_id": record.record_id, "status": "consumed"},
            )

    # ----------------------------------------------------------------- jobs

    def submit_finetune(self, kind: str, params: Optional[dict] = None,
                        idempotency_key: Optional[str] = None) -> TrainJob:
        if kind not in JOB_KINDS:
            raise ConfigError(f"job kind must be one of {JOB_KINDS}, got {kind!r}")
        with self.lock:
            cached = self._check_idempotent(idempotency_key)
            if cached is not None:
                return self.jobs[cached["job_id"]]
            if self.LINEAGE in self._running_lineages:
                raise StateError(f"a job is already running on lineage {self.LINEAGE!r}")
            job = TrainJob(job_id=f"job-{uuid.uuid4().hex[:12]}", kind=kind)
            self.jobs[job.job_id] = job
            self._running_lineages.add(self.LINEAGE)
            self._log_job(job)
            self._store_idempotent(idempotency_key, {"job_id": job.job_id})
            self.executor.submit(self._run_job, job, params or {})
            return job

    def _log_job(self, job: TrainJob) -> None:
        _append_jsonl(self.root / "jobs.jsonl", {**job.to_dict(), "metric_tail": []})

    def _run_job(self, job: TrainJob, params: dict) -> None:
        try:
            job.state = "running"
            job.progress = 0.05
            self._log_job(job)
            if job.kind in ("seg_finetune", "grade_finetune"):
                self._run_feedback_job(job)
            elif job.kind == "simulation":
                self._run_simulation_job(job, params)
            else:
                raise ConfigError("uda jobs need a dataset_root parameter")
            job.state = "done"
            job.progress = 1.0
        except Exception as exc:  # job failures are data, not crashes
            job.state = "failed"
            job.message = f"{type(exc).__name__}: {exc}"
        finally:
            with self.lock:
                self._running_lineages.discard(self.LINEAGE)
            self._log_job(job)

    def _run_feedback_job(self, job: TrainJob) -> None:
        from ..feedback.finetune import apply_feedback

        with self.lock:
            accepted = [r for r in self.feedback.values() if r.status == "accepted"]
            if job.kind == "seg_finetune":
                accepted = [r for r in accepted if r.geometries]
            if job.kind == "grade_finetune":
                accepted = [r for r in accepted if r.corrected_grade is not None]
        if not accepted:
            raise StateError("no accepted feedback records to consume")
        images = {r.case_id: self.load_case_image(r.case_id) for r in accepted}
        job.progress = 0.2
        log = MetricLog()
        parent = self.latest().version
        system = load_system(self.root / self.latest().checkpoint)
        graded = [r for r in accepted if r.corrected_grade is not None]
        if graded:
            log.append(when="before", **self._grade_agreement(system, graded, images))
        job.progress = 0.3
        apply_feedback(system, accepted, images, self.config, log=log)
        if graded:
            log.append(when="after", **self._grade_agreement(system, graded, images))
        job.progress = 0.8
        job.metric_tail = log.rows[-10:]
        with self.lock:
            entry = self._register_version(system, parent=parent)
            self._mark_consumed(accepted)
        job.model_version = entry.version

    @staticmethod
    def _grade_agreement(system: TrainedSystem, records, images) -> dict:
        """Accuracy/kappa of the system against the corrected grades."""
        from ..metrics import accuracy, confusion_from_predictions, quadratic_kappa

        true = [r.corrected_grade for r in records]
        pred = [system.grade(images[r.case_id]).grade for r in records]
        cm = confusion_from_predictions(true, pred)
        try:
            kappa = quadratic_kappa(cm)
        except Exception:
            kappa = 0.0
        return {"stage": "grade_agreement", "accuracy": accuracy(cm), "kappa": kappa}

    def rasterized_feedback_mask(self, record_id: str, lesion: str) -> np.ndarray:
        """Server-side rasterization of a record's geometries for one lesion,
        at canonical resolution: the single source of truth the UI re-fetches."""
        from ..data.rasterize import rasterize

        record = self.feedback[record_id]
        size = self.config.canonical_size
        mask = np.zeros((size, size), dtype=np.uint8)
        for geometry in record.geometries:
            if geometry.lesion == lesion:
                mask |= rasterize(geometry, size, size)
        return mask

    def _run_simulation_job(self, job: TrainJob, params: dict) -> None:
        from ..data.io import load_dataset
        from ..feedback.finetune import run_simulation
        from ..feedback.records import build_schedule

        root = params.get("dataset_root")
        if not root:
            raise ConfigError("simulation jobs need a dataset_root parameter")
        data = load_dataset(root, "synthetic")
        schedule = build_schedule([s.image.id for s in data.train], seed=self.config.seed)
        job.progress = 0.2
        log = run_simulation(data, schedule, self.config.noise_kernel, self.config)
        job.metric_tail = log.rows[-10:]

    def shutdown(self) -> None:
        self.executor.shutdown(wait=True)
