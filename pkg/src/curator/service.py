"""Local HTTP review service.

Serves the loaded dataset, duplicate report, misclassified samples and pool
candidates to a browser UI, and records operator decisions in the
append-only journal. Read-mostly: the only mutating endpoints are decision
recording and the explicit apply/export. Decision writes are serialized
through a single lock so one operator plus background readers are safe.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .augment import Pool
from .dataset import CapsConfig, Dataset, Sample, content_hash, encode_png, export_dataset, validate_caps
from .dedupe import DuplicateReport, pairwise_distances
from .embedder import EmbedderSpec, embed_samples
from .journal import DecisionJournal, JournalReplay
from .labels import CLASS_LABELS, is_class_label
from .rebalance import PredictionRecord, classification_report, compute_quotas

DEFAULT_PAGE_SIZE = 24


@dataclass
class SessionState:
    """Everything one review session works against."""

    train: Dataset
    val: Dataset | None = None
    pool: Pool | None = None
    duplicate_report: DuplicateReport | None = None
    predictions: list[PredictionRecord] | None = None
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    caps: CapsConfig = field(default_factory=CapsConfig)
    caps_mode: str = "even"
    journal: DecisionJournal | None = None
    output_dir: Path | None = None
    ui_dir: Path | None = None
    quota_budget: int | None = None  # defaults to the train total
    quota_floor: int = 0
    quota_epsilon: float = 0.05

    def __post_init__(self):
        self.replay = JournalReplay(self.train, self.pool)
        for record in self.journal.records if self.journal else ():
            self.replay.apply(record)
        if self.duplicate_report:
            known = self._all_ids()
            for g in self.duplicate_report.groups:
                for member in (g.representative, *g.duplicates):
                    if member not in known:
                        raise ValueError(f"duplicate report references unknown id: {member}")

    def _all_ids(self) -> set[str]:
        ids = set(self.train.ids())
        if self.val:
            ids |= self.val.ids()
        if self.pool:
            ids |= self.pool.ids()
        return ids

    def find_sample(self, sample_id: str) -> Sample | None:
        for source in (self.train, self.val):
            if source is not None and sample_id in source.index:
                return source.index[sample_id]
        if self.pool is not None:
            for s in self.pool.iter_samples():
                if s.id == sample_id:
                    return s
        return None


class DecisionIn(BaseModel):
    kind: str
    subject_id: str
    pool_id: str | None = None
    new_label: str | None = None
    note: str = ""


def _page_bounds(page: int, page_size: int, total: int) -> tuple[int, int]:
    start = (page - 1) * page_size
    return min(start, total), min(start + page_size, total)


def create_app(state: SessionState) -> FastAPI:
    app = FastAPI(title="curator review service")
    write_lock = threading.Lock()

    def image_url(sample_id: str) -> str:
        return f"/api/samples/{sample_id}/image"

    @app.get("/api/summary")
    def summary():
        val = state.val or Dataset(name="empty", split="val", samples={})
        caps = validate_caps(state.train, val, state.caps, mode=state.caps_mode)
        return {
            "train": {
                "name": state.train.name,
                "total": state.train.total,
                "per_class": state.train.class_sizes(),
                "current_per_class": {c: len(state.replay.buckets[c]) for c in CLASS_LABELS},
            },
            "val": None
            if state.val is None
            else {
                "name": state.val.name,
                "total": state.val.total,
                "per_class": state.val.class_sizes(),
            },
            "pool": None if state.pool is None else {"per_class": state.pool.class_sizes()},
            "caps": caps.to_json(),
            "decisions": len(state.journal.records) if state.journal else 0,
            "classes": list(CLASS_LABELS),
        }

    @app.get("/api/quota")
    def quota_plan():
        if state.predictions is None:
            raise HTTPException(status_code=409, detail="predictions must be loaded to derive quotas")
        report = classification_report(state.predictions)
        budget = state.quota_budget if state.quota_budget is not None else state.train.total
        plan = compute_quotas(report, budget=budget, floor=state.quota_floor, epsilon=state.quota_epsilon)
        return {
            "budget": plan.budget,
            "floor": plan.floor,
            "targets": dict(plan.targets),
            "current": {c: len(state.replay.buckets[c]) for c in CLASS_LABELS},
        }

    @app.get("/api/classes/{label}/samples")
    def class_samples(label: str, page: int = Query(1, ge=1), page_size: int = Query(DEFAULT_PAGE_SIZE, ge=1)):
        if not is_class_label(label):
            raise HTTPException(status_code=404, detail=f"unknown class label: {label}")
        bucket = state.replay.buckets[label]
        start, end = _page_bounds(page, page_size, len(bucket))
        return {
            "total": len(bucket),
            "page": page,
            "items": [
                {
                    "id": s.id,
                    "provenance": s.provenance,
                    "width": s.width,
                    "height": s.height,
                    "image_url": image_url(s.id),
                }
                for s in bucket[start:end]
            ],
        }

    @app.get("/api/samples/{sample_id:path}/image")
    def sample_image(sample_id: str):
        sample = state.find_sample(sample_id)
        if sample is None:
            raise HTTPException(status_code=404, detail=f"unknown sample id: {sample_id}")
        return Response(content=encode_png(sample.image), media_type="image/png")

    @app.get("/api/duplicates")
    def duplicates(page: int = Query(1, ge=1), page_size: int = Query(DEFAULT_PAGE_SIZE, ge=1)):
        report = state.duplicate_report
        if report is None:
            raise HTTPException(status_code=409, detail="no duplicate report loaded")
        groups = report.groups
        start, end = _page_bounds(page, page_size, len(groups))
        items = []
        for g in groups[start:end]:
            members = [state.find_sample(i) for i in (g.representative, *g.duplicates)]
            matrix = embed_samples(members, state.embedder)
            dist = pairwise_distances(matrix, report.metric)
            items.append(
                {
                    "representative": g.representative,
                    "duplicates": list(g.duplicates),
                    "size": 1 + len(g.duplicates),
                    "distances": {d: float(dist[0, k + 1]) for k, d in enumerate(g.duplicates)},
                    "thumbnails": {m.id: image_url(m.id) for m in members},
                    "removed": [d for d in g.duplicates if d in state.replay.removed],
                }
            )
        return {"total": len(groups), "page": page, "threshold": report.threshold, "items": items}

    @app.get("/api/misclassified")
    def misclassified(label: str | None = Query(None, alias="class")):
        if state.predictions is None or state.val is None:
            raise HTTPException(status_code=409, detail="predictions and val split must be loaded")
        report = classification_report(state.predictions)
        f1_of = {c: s.f1 for c, s in report.per_class.items()}
        rows = [r for r in state.predictions if r.true_label != r.predicted_label]
        if label is not None:
            if not is_class_label(label):
                raise HTTPException(status_code=404, detail=f"unknown class label: {label}")
            rows = [r for r in rows if r.true_label == label]
        rows.sort(key=lambda r: (f1_of.get(r.true_label, 0.0), r.true_label, r.sample_id))
        return {
            "f1": f1_of,
            "items": [
                {
                    "sample_id": r.sample_id,
                    "true_label": r.true_label,
                    "predicted_label": r.predicted_label,
                    "image_url": image_url(r.sample_id),
                }
                for r in rows
            ],
        }

    @app.get("/api/pool/{label}/candidates")
    def pool_candidates(
        label: str,
        near: str | None = Query(None),
        page: int = Query(1, ge=1),
        page_size: int = Query(DEFAULT_PAGE_SIZE, ge=1),
    ):
        if state.pool is None:
            raise HTTPException(status_code=409, detail="no pool loaded")
        if not is_class_label(label):
            raise HTTPException(status_code=404, detail=f"unknown class label: {label}")
        blocked = set(state.replay.used_pool) | set(state.replay.rejected_pool)
        candidates = [s for s in state.pool.samples[label] if s.id not in blocked]
        distances: dict[str, float] = {}
        if near is not None:
            ref = state.find_sample(near)
            if ref is None:
                raise HTTPException(status_code=404, detail=f"unknown sample id: {near}")
            ref_vec = embed_samples([ref], state.embedder).rows[0]
            rows = embed_samples(candidates, state.embedder).rows
            dist = np.linalg.norm(rows - ref_vec, axis=1) if candidates else np.zeros(0)
            order = sorted(range(len(candidates)), key=lambda i: (dist[i], candidates[i].id))
            candidates = [candidates[i] for i in order]
            distances = {candidates[k].id: float(dist[order[k]]) for k in range(len(order))}
        start, end = _page_bounds(page, page_size, len(candidates))
        return {
            "total": len(candidates),
            "page": page,
            "items": [
                {
                    "id": s.id,
                    "image_url": image_url(s.id),
                    "parent_id": s.lineage.parent_id if s.lineage else None,
                    "distance": distances.get(s.id),
                }
                for s in candidates[start:end]
            ],
        }

    @app.post("/api/decisions")
    def record_decision(decision: DecisionIn):
        if state.journal is None:
            raise HTTPException(status_code=409, detail="no journal configured")
        with write_lock:
            probe = decision.model_dump()
            probe["decision_id"] = state.journal.next_id()
            try:
                from .journal import DecisionRecord

                record = DecisionRecord.from_json(probe)
                state.replay.apply(record)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            written = state.journal.append(
                decision.kind,
                decision.subject_id,
                pool_id=decision.pool_id,
                new_label=decision.new_label,
                note=decision.note,
            )
            return written.to_json()

    @app.post("/api/apply")
    def apply_journal():
        if state.journal is None or state.output_dir is None:
            raise HTTPException(status_code=409, detail="journal and output dir must be configured")
        from .journal import apply_decisions

        curated = apply_decisions(state.journal.records, state.train, state.pool)
        out = Path(state.output_dir) / "curated"
        export_dataset(curated, out)
        return {
            "path": str(out),
            "total": curated.total,
            "manifest_hash": content_hash(curated),
        }

    if state.ui_dir and Path(state.ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=state.ui_dir, html=True), name="ui")
    else:

        @app.get("/")
        def root():
            return {"service": "curator review service", "ui": "not bundled"}

    return app
