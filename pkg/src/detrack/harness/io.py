"""Track files: MOT-challenge style CSV plus a JSON mirror.

CSV rows are ``frame,id,x,y,w,h,score,category`` with 1-based frames, as in
MOT-challenge files; everything in memory is 0-based.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from ..assignment.boxes import Box
from ..mot_metrics import TrajectorySet
from ..tracker import TrackOutput

FIELDS = ["frame", "id", "x", "y", "w", "h", "score", "category"]


def write_tracks_csv(outputs: Sequence[Sequence[TrackOutput]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS)
        for frame in outputs:
            for o in frame:
                x, y, bw, bh = o.box.to_xywh()
                w.writerow([o.frame + 1, o.id, repr(x), repr(y), repr(bw), repr(bh), repr(o.score), o.category or ""])


def read_tracks_csv(path) -> list[TrackOutput]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TrackOutput(
                    frame=int(row["frame"]) - 1,
                    id=int(row["id"]),
                    box=Box.from_xywh(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"])),
                    score=float(row["score"]),
                    category=row["category"] or None,
                )
            )
    return out


def write_tracks_json(outputs: Sequence[Sequence[TrackOutput]], path) -> None:
    rows = [
        {"frame": o.frame, "id": o.id, "box": list(o.box.to_xywh()), "score": o.score, "category": o.category}
        for frame in outputs
        for o in frame
    ]
    Path(path).write_text(json.dumps({"tracks": rows}))


def read_tracks_json(path) -> list[TrackOutput]:
    d = json.loads(Path(path).read_text())
    return [TrackOutput(r["frame"], r["id"], Box.from_xywh(*r["box"]), r["score"], r["category"]) for r in d["tracks"]]


def to_trajectories(rows: Sequence[TrackOutput]) -> TrajectorySet:
    return TrajectorySet.from_rows((o.frame, o.id, o.box, o.category) for o in rows)
