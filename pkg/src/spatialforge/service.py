"""Human-verification service: a lease-based review queue over scene objects
and near-margin relation facts, durable via an append-only verdict log.

The queue core is synchronous and lock-protected; the HTTP layer is a thin
stdlib ThreadingHTTPServer wrapper so the whole thing restarts in-process for
tests. Verdicts are fsynced to the log before they are acknowledged, and the
log is replayed over the scene file at startup.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import parse_qs, unquote, urlparse

from .relations import RelationConfig, RelationFact, derive_all, save_facts
from .scenes import (
    CAMERA_ID,
    SceneAnnotation,
    SceneSet,
    record_verdict,
    save_scenes,
)

ITEM_STATUSES = ("pending", "accepted", "rejected", "skipped")
VERDICT_FOR_STATUS = {"accepted": "accepted", "rejected": "rejected"}

# Facts whose measured gap is within this multiple of their margin get queued
# for human review alongside unverified objects.
NEAR_MARGIN_FACTOR = 2.0


class ConflictError(RuntimeError):
    """Wrong reviewer, expired lease, or already-resolved item."""


class UnknownItemError(KeyError):
    pass


@dataclass
class ReviewItem:
    item_id: str
    scene_id: str
    object_id: str | None
    fact_id: str | None
    payload: dict
    status: str = "pending"
    reviewer: str | None = None
    resolved_at: float | None = None
    sequence: int = 0


def is_near_margin(fact: RelationFact, factor: float = NEAR_MARGIN_FACTOR) -> bool:
    return abs(fact.margin_value) < factor * fact.threshold


def _orientation_arrow(scene: SceneAnnotation, object_id: str) -> list[float]:
    """A schematic 2D arrow for the object's facing direction.

    Without intrinsics there is no true projection; the arrow maps the
    calibrated x (viewer right) and z (up) components onto pixels from the
    bbox center, which is enough for a reviewer to sanity-check a pose.
    """
    obj = scene.get_object(object_id)
    x_min, y_min, x_max, y_max = obj.bbox2d
    cx, cy = (x_min + x_max) / 2.0, (y_min + y_max) / 2.0
    dx, dy = obj.orientation.x, -obj.orientation.z
    norm = (dx * dx + dy * dy) ** 0.5
    if norm < 1e-6:
        dx, dy = 0.0, -1.0
        norm = 1.0
    scale = max(8.0, min(x_max - x_min, y_max - y_min) / 2.0)
    return [cx, cy, cx + scale * dx / norm, cy + scale * dy / norm]


def _fact_text(fact: RelationFact, scene: SceneAnnotation) -> str:
    def name(object_id: str) -> str:
        if object_id == CAMERA_ID:
            return "the camera"
        obj = scene.get_object(object_id)
        return f"the {obj.category} '{obj.object_id}'"

    rel = fact.kind.replace("_", " ")
    head = f"{name(fact.subject_id)} [{rel}] {name(fact.object_id)}"
    if fact.anchor_id:
        head += f" (anchor: {name(fact.anchor_id)})"
    return f"{head}: {fact.verdict} (gap {fact.margin_value:.3f}, margin {fact.threshold:.3f})"


class ReviewQueue:
    """In-memory queue with durable verdicts.

    Items come from enqueue(); leases hand the oldest pending item to one
    reviewer at a time for lease_seconds; submit_verdict persists to the
    append-only log (fsync) before acknowledging and updates the scene set
    through scenes.record_verdict.
    """

    def __init__(
        self,
        scenes: SceneSet,
        fact_pairs: Sequence[tuple[str, RelationFact]] = (),
        verdict_log: str | Path | None = None,
        lease_seconds: float = 600.0,
        clock: Callable[[], float] = time.monotonic,
        near_margin_factor: float = NEAR_MARGIN_FACTOR,
    ):
        self._lock = threading.Lock()
        self._scenes = scenes
        self._log_path = Path(verdict_log) if verdict_log else None
        self._lease_seconds = lease_seconds
        self._clock = clock
        self._near_margin_factor = near_margin_factor
        self._items: dict[str, ReviewItem] = {}
        self._leases: dict[str, tuple[str, float]] = {}  # item_id -> (reviewer, expiry)
        self._sequence = 0
        self.enqueue(scenes, fact_pairs)
        if self._log_path and self._log_path.exists():
            self._replay_log()

    # -- queue construction ------------------------------------------------

    def enqueue(self, scenes: SceneSet, fact_pairs: Sequence[tuple[str, RelationFact]] = ()) -> int:
        """Add one item per unverified object and per near-margin fact.

        Idempotent: identities already present (pending or resolved) are not
        re-added.
        """
        added = 0
        with self._lock:
            self._scenes = scenes
            for scene in scenes:
                for obj in scene.objects:
                    if obj.verified != "unverified":
                        continue
                    item_id = f"obj:{scene.scene_id}:{obj.object_id}"
                    if item_id in self._items:
                        continue
                    payload = {
                        "image_url": f"/media/{scene.scene_id}",
                        "image_size": list(scene.image_size),
                        "boxes": [list(obj.bbox2d)],
                        "arrows": [_orientation_arrow(scene, obj.object_id)],
                        "fact_text": (
                            f"object '{obj.object_id}' ({obj.category}): location "
                            f"[{obj.location.x:.2f}, {obj.location.y:.2f}, {obj.location.z:.2f}]"
                        ),
                    }
                    self._add_item(ReviewItem(
                        item_id=item_id, scene_id=scene.scene_id,
                        object_id=obj.object_id, fact_id=None, payload=payload,
                    ))
                    added += 1
            for scene_id, fact in fact_pairs:
                if not is_near_margin(fact, self._near_margin_factor):
                    continue
                item_id = f"fact:{scene_id}:{fact.fact_id}"
                if item_id in self._items:
                    continue
                try:
                    scene = self._scenes.get(scene_id)
                except KeyError:
                    continue
                boxes = []
                arrows = []
                for object_id in (fact.subject_id, fact.object_id, fact.anchor_id):
                    if object_id and object_id != CAMERA_ID:
                        try:
                            obj = scene.get_object(object_id)
                        except KeyError:
                            continue
                        boxes.append(list(obj.bbox2d))
                        arrows.append(_orientation_arrow(scene, object_id))
                payload = {
                    "image_url": f"/media/{scene_id}",
                    "image_size": list(scene.image_size),
                    "boxes": boxes,
                    "arrows": arrows,
                    "fact_text": _fact_text(fact, scene),
                }
                self._add_item(ReviewItem(
                    item_id=item_id, scene_id=scene_id, object_id=None,
                    fact_id=fact.fact_id, payload=payload,
                ))
                added += 1
        return added

    def _add_item(self, item: ReviewItem) -> None:
        item.sequence = self._sequence
        self._sequence += 1
        self._items[item.item_id] = item

    # -- durability ----------------------------------------------------------

    def _append_log(self, entry: dict) -> None:
        if self._log_path is None:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay_log(self) -> None:
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self._apply_verdict(
                    entry["item_id"], entry["verdict"], entry["reviewer"],
                    entry.get("ts", 0.0),
                )

    def _apply_verdict(self, item_id: str, verdict: str, reviewer: str, ts: float) -> None:
        item = self._items.get(item_id)
        if item is None or item.status != "pending":
            return
        item.status = verdict
        item.reviewer = reviewer
        item.resolved_at = ts
        self._leases.pop(item_id, None)
        if item.object_id is not None and verdict in VERDICT_FOR_STATUS:
            self._scenes = record_verdict(
                self._scenes, item.scene_id, item.object_id, VERDICT_FOR_STATUS[verdict]
            )

    # -- lease protocol --------------------------------------------------------

    def _expire_leases(self) -> None:
        now = self._clock()
        expired = [item_id for item_id, (_, expiry) in self._leases.items() if expiry <= now]
        for item_id in expired:
            del self._leases[item_id]

    def next_item(self, reviewer: str) -> ReviewItem | None:
        """Lease the oldest pending, unleased item to this reviewer."""
        with self._lock:
            self._expire_leases()
            candidates = sorted(
                (i for i in self._items.values()
                 if i.status == "pending" and i.item_id not in self._leases),
                key=lambda i: i.sequence,
            )
            if not candidates:
                return None
            item = candidates[0]
            self._leases[item.item_id] = (reviewer, self._clock() + self._lease_seconds)
            return item

    def submit_verdict(self, item_id: str, verdict: str, reviewer: str) -> dict:
        """Persist a verdict; requires a live lease held by this reviewer."""
        if verdict not in ("accepted", "rejected", "skipped"):
            raise ValueError(f"verdict must be accepted/rejected/skipped, got {verdict!r}")
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise UnknownItemError(item_id)
            if item.status != "pending":
                raise ConflictError(f"item {item_id} already resolved as {item.status}")
            self._expire_leases()
            lease = self._leases.get(item_id)
            if lease is None or lease[0] != reviewer:
                raise ConflictError(f"item {item_id} is not leased to {reviewer!r}")
            ts = time.time()
            self._append_log({
                "item_id": item_id, "verdict": verdict, "reviewer": reviewer, "ts": ts,
            })
            self._apply_verdict(item_id, verdict, reviewer, ts)
            return {"item_id": item_id, "status": verdict}

    # -- views -------------------------------------------------------------------

    def stats(self) -> dict:
        with self._lock:
            self._expire_leases()
            counts = {status: 0 for status in ITEM_STATUSES}
            for item in self._items.values():
                counts[item.status] += 1
            counts["leased"] = len(self._leases)
            counts["total"] = len(self._items)
            return counts

    def scene_set(self) -> SceneSet:
        with self._lock:
            return self._scenes

    def export_verified(
        self,
        scenes_path: str | Path,
        facts_path: str | Path | None = None,
        relation_cfg: RelationConfig | None = None,
    ) -> SceneSet:
        """Scenes restricted to accepted objects; facts re-derived on them."""
        with self._lock:
            scenes = self._scenes
        kept = []
        for scene in scenes:
            accepted = [o for o in scene.objects if o.verified == "accepted"]
            if accepted:
                kept.append(replace(scene.with_objects(accepted), source="human_verified"))
        out = SceneSet(scenes=tuple(kept))
        save_scenes(out, scenes_path)
        if facts_path is not None:
            cfg = relation_cfg or RelationConfig()
            facts: list[RelationFact] = []
            for scene in out:
                facts.extend(derive_all(scene, cfg).facts)
            save_facts(facts, cfg, facts_path)
        return out


def _item_json(item: ReviewItem) -> dict:
    return {
        "item_id": item.item_id,
        "scene_id": item.scene_id,
        "object_id": item.object_id,
        "fact_id": item.fact_id,
        "status": item.status,
        "payload": item.payload,
    }


class _Handler(BaseHTTPRequestHandler):
    queue: ReviewQueue
    media_root: Path | None
    static_dir: Path | None

    def _send_json(self, obj, status: int = 200) -> None:
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, path: Path) -> None:
        data = path.read_bytes()
        ctype = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib name
        pass

    def do_GET(self) -> None:
        url = urlparse(self.path)
        parts = [unquote(p) for p in url.path.split("/") if p]
        try:
            if url.path == "/items/next":
                reviewer = parse_qs(url.query).get("reviewer", ["anonymous"])[0]
                item = self.queue.next_item(reviewer)
                if item is None:
                    self._send_json({"item": None, "stats": self.queue.stats()})
                else:
                    self._send_json({"item": _item_json(item), "stats": self.queue.stats()})
            elif url.path == "/stats":
                self._send_json(self.queue.stats())
            elif len(parts) == 2 and parts[0] == "media":
                scene = self.queue.scene_set().get(parts[1])
                path = Path(scene.image_path)
                if self.media_root is not None and not path.is_absolute():
                    path = self.media_root / path
                if path.exists():
                    self._send_file(path)
                else:
                    self._send_json({"error": "image not found"}, status=404)
            elif self.static_dir is not None:
                rel = url.path.lstrip("/") or "index.html"
                candidate = (self.static_dir / rel).resolve()
                if candidate.is_file() and self.static_dir.resolve() in candidate.parents:
                    self._send_file(candidate)
                else:
                    self._send_json({"error": "not found"}, status=404)
            else:
                self._send_json({"error": "not found"}, status=404)
        except KeyError:
            self._send_json({"error": "unknown scene"}, status=404)
        except Exception as exc:  # total handler: surface as 500, keep serving
            self._send_json({"error": str(exc)}, status=500)

    def do_POST(self) -> None:
        url = urlparse(self.path)
        parts = [unquote(p) for p in url.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "items" and parts[2] == "verdict":
            length = int(self.headers.get("Content-Length", "0"))
            try:
                body = json.loads(self.rfile.read(length) or b"{}")
                ack = self.queue.submit_verdict(
                    parts[1], body.get("verdict", ""), body.get("reviewer", "anonymous")
                )
                self._send_json(ack)
            except UnknownItemError:
                self._send_json({"error": "unknown item"}, status=404)
            except ConflictError as exc:
                self._send_json({"error": str(exc)}, status=409)
            except (ValueError, json.JSONDecodeError) as exc:
                self._send_json({"error": str(exc)}, status=400)
        else:
            self._send_json({"error": "not found"}, status=404)


class VerifyServer:
    """Threaded HTTP front for a ReviewQueue, restartable in-process."""

    def __init__(
        self,
        queue: ReviewQueue,
        host: str = "127.0.0.1",
        port: int = 0,
        media_root: str | Path | None = None,
        static_dir: str | Path | None = None,
    ):
        handler = type("BoundHandler", (_Handler,), {
            "queue": queue,
            "media_root": Path(media_root) if media_root else None,
            "static_dir": Path(static_dir) if static_dir else None,
        })
        self.queue = queue
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def serve_forever(self) -> None:
        self._server.serve_forever()
