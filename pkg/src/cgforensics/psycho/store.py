"""Durable state for the human-study service.

One directory per study: study.json (pool definition, written once),
sessions.jsonl and annotations.jsonl (append-only, fsynced per line). All
runtime state is reconstructed by replaying the two logs, so a killed and
restarted service carries on exactly where it stopped.
"""

import json
import os
import threading
from datetime import datetime, timezone

import numpy as np
from PIL import Image

LABELS = ("GAN", "Graphics", "Real")
LABEL_TO_INT = {"GAN": 0, "Graphics": 1, "Real": 2}

STUDY_FILE = "study.json"
SESSIONS_FILE = "sessions.jsonl"
ANNOTATIONS_FILE = "annotations.jsonl"


class StudyError(Exception):
    code = "study_error"


class StudyFullError(StudyError):
    code = "study_full"


class UnknownSessionError(StudyError):
    code = "unknown_session"


class DuplicateAnnotationError(StudyError):
    code = "duplicate"


class ValidationError(StudyError):
    code = "invalid"


def _now():
    return datetime.now(timezone.utc).isoformat()


def create_study(study_dir, study_id, images, n_per_session=30, seed=0):
    """Write a fresh study directory.

    images: list of {"id": int, "path": str, "label": optional truth name
    or int}; the label never leaves the server except in the export summary.
    """
    os.makedirs(study_dir, exist_ok=True)
    doc = {"study_id": study_id, "n_per_session": int(n_per_session),
           "seed": int(seed), "images": []}
    seen = set()
    for im in images:
        iid = int(im["id"])
        if iid in seen:
            raise ValidationError("duplicate pool image id %d" % iid)
        seen.add(iid)
        entry = {"id": iid, "path": str(im["path"])}
        if "label" in im and im["label"] is not None:
            lab = im["label"]
            entry["label"] = LABELS[lab] if isinstance(lab, int) else str(lab)
        doc["images"].append(entry)
    path = os.path.join(study_dir, STUDY_FILE)
    if os.path.exists(path):
        raise StudyError("study.json already exists in %s" % study_dir)
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")
    return path


def _append_line(path, obj):
    line = json.dumps(obj, separators=(",", ":"))
    with open(path, "a") as f:
        f.write(line + "\n")
        f.flush()
        os.fsync(f.fileno())


def _read_lines(path):
    if not os.path.exists(path):
        return []
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


class _Session:
    def __init__(self, session_id, participant, image_ids, created_at):
        self.session_id = session_id
        self.participant = participant
        self.image_ids = list(image_ids)
        self.created_at = created_at
        self.answered = set()

    @property
    def cursor(self):
        # next unanswered index; out-of-order answers never skip an image
        for i, iid in enumerate(self.image_ids):
            if iid not in self.answered:
                return i
        return len(self.image_ids)

    def next_image(self):
        i = self.cursor
        if i >= len(self.image_ids):
            return None
        return self.image_ids[i], i


class StudyStore:
    """Single-writer store; every mutating call is serialized by a lock."""

    def __init__(self, study_dir):
        self.dir = study_dir
        with open(os.path.join(study_dir, STUDY_FILE)) as f:
            doc = json.load(f)
        self.study_id = doc["study_id"]
        self.n_per_session = int(doc["n_per_session"])
        self.seed = int(doc["seed"])
        self.images = {int(im["id"]): im for im in doc["images"]}
        self.pool_order = [int(im["id"]) for im in doc["images"]]
        self._lock = threading.Lock()
        self._size_cache = {}
        self.sessions = {}
        self._assigned = set()
        self._replay()

    def _replay(self):
        for doc in _read_lines(os.path.join(self.dir, SESSIONS_FILE)):
            s = _Session(doc["session_id"], doc["participant"],
                         doc["image_ids"], doc["created_at"])
            self.sessions[s.session_id] = s
            self._assigned.update(s.image_ids)
        for doc in _read_lines(os.path.join(self.dir, ANNOTATIONS_FILE)):
            s = self.sessions.get(doc["session_id"])
            if s is not None:
                s.answered.add(int(doc["image_id"]))

    # ------------------------------------------------------------ sessions

    def create_session(self, participant):
        if not participant or not str(participant).strip():
            raise ValidationError("participant id required")
        with self._lock:
            unassigned = [iid for iid in self.pool_order if iid not in self._assigned]
            if len(unassigned) < self.n_per_session:
                raise StudyFullError(
                    "study full: %d unassigned images left, %d needed"
                    % (len(unassigned), self.n_per_session))
            index = len(self.sessions)
            rng = np.random.default_rng([self.seed, index])
            picked = [unassigned[i] for i in
                      rng.choice(len(unassigned), size=self.n_per_session, replace=False)]
            session = _Session("s%04d" % index, str(participant), picked, _now())
            _append_line(os.path.join(self.dir, SESSIONS_FILE), {
                "session_id": session.session_id, "participant": session.participant,
                "image_ids": session.image_ids, "created_at": session.created_at})
            self.sessions[session.session_id] = session
            self._assigned.update(picked)
            return session

    def get_session(self, session_id):
        s = self.sessions.get(session_id)
        if s is None:
            raise UnknownSessionError("unknown session %r" % session_id)
        return s

    def image_path(self, image_id):
        im = self.images.get(int(image_id))
        if im is None:
            raise ValidationError("unknown image %r" % image_id)
        return im["path"]

    def _image_size(self, image_id):
        if image_id not in self._size_cache:
            with Image.open(self.image_path(image_id)) as im:
                self._size_cache[image_id] = im.size  # (w, h)
        return self._size_cache[image_id]

    # --------------------------------------------------------- annotations

    def submit_annotation(self, session_id, image_id, label, boxes, elapsed_ms):
        with self._lock:
            s = self.get_session(session_id)
            try:
                image_id = int(image_id)
            except (TypeError, ValueError):
                raise ValidationError("image_id must be an integer")
            if image_id not in s.image_ids:
                raise ValidationError("image %d does not belong to this session" % image_id)
            if image_id in s.answered:
                raise DuplicateAnnotationError("image %d already annotated" % image_id)
            if label not in LABELS:
                raise ValidationError("label must be one of %s" % (LABELS,))
            w, h = self._image_size(image_id)
            clean = []
            for box in boxes or []:
                try:
                    bx, by, bw, bh = (int(box["x"]), int(box["y"]),
                                      int(box["w"]), int(box["h"]))
                except (KeyError, TypeError, ValueError):
                    raise ValidationError("box must carry integer x,y,w,h")
                if bw < 1 or bh < 1 or bx < 0 or by < 0 or bx + bw > w or by + bh > h:
                    raise ValidationError("box %r outside the %dx%d image" % (box, w, h))
                clean.append({"x": bx, "y": by, "w": bw, "h": bh})
            try:
                elapsed_ms = int(elapsed_ms)
            except (TypeError, ValueError):
                raise ValidationError("elapsed_ms must be an integer")
            if elapsed_ms < 0:
                raise ValidationError("elapsed_ms must be non-negative")
            record = {"session_id": s.session_id, "participant": s.participant,
                      "image_id": image_id, "label": label, "boxes": clean,
                      "elapsed_ms": elapsed_ms, "ts": _now()}
            _append_line(os.path.join(self.dir, ANNOTATIONS_FILE), record)
            s.answered.add(image_id)
            return {"ok": True, "answered": len(s.answered), "total": len(s.image_ids)}

    # -------------------------------------------------------------- export

    def export_records(self):
        """All annotation records, straight from the durable log."""
        records = _read_lines(os.path.join(self.dir, ANNOTATIONS_FILE))
        if not records:
            raise StudyError("study has no annotations yet")
        return records

    def export_summary(self, records):
        """Manual confusion matrix against the pool's truth labels."""
        matrix = [[0] * 3 for _ in range(3)]
        scored = 0
        for rec in records:
            im = self.images.get(int(rec["image_id"]))
            truth = im.get("label") if im else None
            if truth is None:
                continue
            matrix[LABEL_TO_INT[truth]][LABEL_TO_INT[rec["label"]]] += 1
            scored += 1
        summary = {"study_id": self.study_id, "annotations": len(records),
                   "scored": scored}
        if scored:
            summary["matrix"] = matrix
            summary["manual_accuracy"] = sum(matrix[i][i] for i in range(3)) / scored
        return summary
