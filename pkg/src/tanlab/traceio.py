"""Trace documents: the one on-disk format every trace passes through.

A document is a single JSON object per file. Tangram traces store poses
(never polygons); folding and room trajectories store '0'/'1' row-string
bitmaps. The writer is canonical (sorted keys, fixed indent, trailing
newline) so save -> load -> save is byte-identical, which keeps uploads,
generator output, and hand edits diffable against each other.
"""

import json
import os
import tempfile
from pathlib import Path

from .bitmap import BinaryImage
from .envs import ExpertTrajectory, FoldState
from .geometry import BoardState, SolveTrace, TanPose, validate_trace

SCHEMA_VERSION = 1
KINDS = ("tangram", "folding", "room")
_METADATA_KEYS = ("author", "puzzle_name", "timestamp", "variant")


class TraceFormatError(ValueError):
    """A document failed schema checks; message names the offending field."""


def _require(condition, message):
    if not condition:
        raise TraceFormatError(message)


class TraceDocument:
    """Validated in-memory form of one trace file.

    frames: for kind 'tangram', a list of steps, each a list of seven pose
    dicts in canonical piece order; for 'folding'/'room', a list of bitmaps,
    each a list of equal-length '0'/'1' strings.
    """

    def __init__(self, kind, metadata, frames, schema_version=SCHEMA_VERSION):
        _require(schema_version == SCHEMA_VERSION,
                 f"schema_version: unrecognized value {schema_version!r}")
        _require(kind in KINDS, f"kind: {kind!r} not one of {KINDS}")
        _require(isinstance(metadata, dict), "metadata: must be an object")
        unknown = sorted(set(metadata) - set(_METADATA_KEYS))
        _require(not unknown, f"metadata: unknown keys {unknown}")
        full = {key: metadata.get(key, "") for key in _METADATA_KEYS}
        for key, value in full.items():
            _require(isinstance(value, str), f"metadata.{key}: must be a string")
        _require(isinstance(frames, list) and frames,
                 "frames: must be a nonempty list")
        self.schema_version = int(schema_version)
        self.kind = kind
        self.metadata = full
        self.frames = frames
        if kind == "tangram":
            self._check_pose_frames()
        else:
            self._check_bitmap_frames()

    def _check_pose_frames(self):
        for step_idx, step in enumerate(self.frames):
            _require(isinstance(step, list) and len(step) == 7,
                     f"frames[{step_idx}]: tangram step needs exactly 7 poses")
            for piece_idx, pose in enumerate(step):
                where = f"frames[{step_idx}][{piece_idx}]"
                _require(isinstance(pose, dict), f"{where}: must be an object")
                _require(set(pose) == {"x", "y", "rot", "flip", "placed"},
                         f"{where}: keys must be x, y, rot, flip, placed")
                for key in ("x", "y", "rot"):
                    _require(isinstance(pose[key], int)
                             and not isinstance(pose[key], bool),
                             f"{where}.{key}: must be an integer")
                for key in ("flip", "placed"):
                    _require(isinstance(pose[key], bool),
                             f"{where}.{key}: must be a boolean")

    def _check_bitmap_frames(self):
        shape = None
        for frame_idx, rows in enumerate(self.frames):
            where = f"frames[{frame_idx}]"
            _require(isinstance(rows, list) and rows,
                     f"{where}: must be a nonempty list of row strings")
            for row_idx, row in enumerate(rows):
                _require(isinstance(row, str) and row
                         and set(row) <= {"0", "1"},
                         f"{where}[{row_idx}]: rows are nonempty "
                         "strings of '0' and '1'")
                _require(len(row) == len(rows[0]),
                         f"{where}[{row_idx}]: row length {len(row)} "
                         f"differs from row 0 ({len(rows[0])})")
            if shape is None:
                shape = (len(rows), len(rows[0]))
            _require((len(rows), len(rows[0])) == shape,
                     f"{where}: frame shape {(len(rows), len(rows[0]))} "
                     f"differs from frame 0 {shape}")

    def payload(self):
        return {"schema_version": self.schema_version, "kind": self.kind,
                "metadata": dict(self.metadata), "frames": self.frames}

    def __eq__(self, other):
        if not isinstance(other, TraceDocument):
            return NotImplemented
        return self.payload() == other.payload()

    def __repr__(self):
        return (f"TraceDocument(kind={self.kind!r}, "
                f"name={self.metadata['puzzle_name']!r}, "
                f"frames={len(self.frames)})")


# -- building documents from in-memory traces -----------------------------------

def document_from_solve(trace, author="", timestamp=""):
    frames = [[pose.as_dict() for pose in step.poses] for step in trace.steps]
    meta = {"puzzle_name": trace.puzzle_name, "variant": trace.variant,
            "author": author, "timestamp": timestamp}
    return TraceDocument("tangram", meta, frames)


def solve_from_document(doc):
    if doc.kind != "tangram":
        raise TraceFormatError(f"kind: expected 'tangram', got {doc.kind!r}")
    _require(doc.metadata["variant"] in ("A", "B"),
             f"metadata.variant: {doc.metadata['variant']!r} is not 'A' or 'B'")
    try:
        steps = [BoardState([TanPose.from_dict(p) for p in step])
                 for step in doc.frames]
        return SolveTrace(doc.metadata["puzzle_name"],
                          doc.metadata["variant"], steps)
    except ValueError as exc:
        raise TraceFormatError(f"frames: {exc}")


def document_from_trajectory(trajectory, kind, author="", timestamp=""):
    if kind not in ("folding", "room"):
        raise TraceFormatError(f"kind: {kind!r} is not a bitmap trace kind")
    frames = [img.to_rows() for img in trajectory.states]
    meta = {"puzzle_name": trajectory.name, "variant": "",
            "author": author, "timestamp": timestamp}
    return TraceDocument(kind, meta, frames)


def trajectory_from_document(doc):
    if doc.kind == "tangram":
        raise TraceFormatError("kind: tangram documents replay to SolveTrace, "
                               "not ExpertTrajectory")
    states = [BinaryImage.from_rows(rows) for rows in doc.frames]
    # a folding environment state is exactly its image, so loaded folding
    # trajectories stay usable as rollout starting points; room scenes are
    # not recoverable from renders and load with no initial state
    initial = FoldState(states[0]) if doc.kind == "folding" else None
    return ExpertTrajectory(states, initial_state=initial,
                            name=doc.metadata["puzzle_name"])


def document_violations(doc):
    """Semantic checks beyond the schema; empty list means acceptable.

    Tangram documents are replayed into poses and run through the full
    geometric validator. Bitmap documents only need enough frames and
    visible motion between consecutive frames.
    """
    if doc.kind == "tangram":
        try:
            trace = solve_from_document(doc)
        except TraceFormatError as exc:
            return [str(exc)]
        return list(validate_trace(trace).violations)
    violations = []
    if len(doc.frames) < 2:
        violations.append(f"trace has {len(doc.frames)} frames, need at least 2")
    for i in range(len(doc.frames) - 1):
        if doc.frames[i] == doc.frames[i + 1]:
            violations.append(f"frames {i} and {i + 1} are identical")
    return violations


# -- canonical JSON round-trip ---------------------------------------------------

def to_json(doc):
    return json.dumps(doc.payload(), sort_keys=True, indent=2) + "\n"


def from_json(text):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"not valid JSON: {exc}")
    _require(isinstance(payload, dict), "document: top level must be an object")
    unknown = sorted(set(payload)
                     - {"schema_version", "kind", "metadata", "frames"})
    _require(not unknown, f"document: unknown keys {unknown}")
    for key in ("schema_version", "kind", "metadata", "frames"):
        _require(key in payload, f"document: missing key {key!r}")
    return TraceDocument(payload["kind"], payload["metadata"],
                         payload["frames"], payload["schema_version"])


def save_document(doc, path):
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(to_json(doc))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_document(path):
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(fh.read())
