"""HTTP+JSON annotation service.

Serves a decimated reference cloud for context plus the random-downsampled
candidate subset to label. Candidate ids are row positions (0..M-1) in the
candidates payload; they are stable because the downsample is seeded.
Label submissions are validated and applied atomically; /commit writes an
"SQNL v1" file with the candidates' source indices in the full cloud.
"""

from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .cloud import PointCloud, random_downsample
from .labels import SparseLabelSet, export_label_file

REFERENCE_LIMIT = 20000


def _serialize_sqnc(cloud: PointCloud) -> bytes:
    import struct

    from .cloud import SQNC_MAGIC, SQNC_VERSION, _FLAG_COLORS, _FLAG_LABELS

    flags = 0
    if cloud.colors is not None:
        flags |= _FLAG_COLORS
    if cloud.gt_labels is not None:
        flags |= _FLAG_LABELS
    parts = [SQNC_MAGIC, struct.pack("<BBHQ", SQNC_VERSION, flags, cloud.num_classes, len(cloud))]
    parts.append(cloud.positions.astype("<f4", copy=False).tobytes())
    if cloud.colors is not None:
        parts.append(cloud.colors.tobytes())
    if cloud.gt_labels is not None:
        parts.append(cloud.gt_labels.astype("<u2", copy=False).tobytes())
    return b"".join(parts)


class AnnotationState:
    """Cloud payloads plus the mutable label map; mutations are serialized."""

    def __init__(self, cloud: PointCloud, ratio: float, out_path, seed=0,
                 class_names=None, reference_limit=REFERENCE_LIMIT):
        self.cloud = cloud
        self.ratio = float(ratio)
        self.seed = int(seed)
        self.out_path = out_path
        candidates, sources = random_downsample(cloud, ratio, seed)
        self.candidate_sources = sources
        # candidates and reference go out without ground-truth labels:
        # the human annotator is the label source
        self.candidates = PointCloud(
            positions=candidates.positions, colors=candidates.colors,
            num_classes=cloud.num_classes,
        )
        if len(cloud) > reference_limit:
            ref, _ = random_downsample(cloud, reference_limit / len(cloud), seed + 1)
        else:
            ref = cloud
        self.reference = PointCloud(
            positions=ref.positions, colors=ref.colors, num_classes=cloud.num_classes,
        )
        self.class_names = list(class_names) if class_names else [
            f"class_{i}" for i in range(cloud.num_classes)
        ]
        self.labels: dict[int, int] = {}
        self.revision = 0
        self.lock = threading.Lock()

    def meta(self) -> dict:
        return {
            "n": len(self.candidates),
            "c": self.cloud.num_classes,
            "ratio": self.ratio,
            "class_names": self.class_names,
        }

    def get_labels(self) -> dict:
        with self.lock:
            points = [{"id": i, "class": c} for i, c in sorted(self.labels.items())]
            return {"points": points, "revision": self.revision}

    def post_labels(self, body: dict) -> dict:
        points = body.get("points")
        if not isinstance(points, list):
            raise ValueError("body must be {\"points\": [...]}")
        edits = []
        for p in points:
            if not isinstance(p, dict) or "id" not in p or "class" not in p:
                raise ValueError("each point needs integer 'id' and 'class'")
            pid, cls = p["id"], p["class"]
            if not isinstance(pid, int) or isinstance(pid, bool):
                raise ValueError(f"id {pid!r} is not an integer")
            if not isinstance(cls, int) or isinstance(cls, bool):
                raise ValueError(f"class {cls!r} is not an integer")
            if not 0 <= pid < len(self.candidates):
                raise ValueError(f"id {pid} out of range [0, {len(self.candidates)})")
            if cls != -1 and not 0 <= cls < self.cloud.num_classes:
                raise ValueError(f"class {cls} out of range [0, {self.cloud.num_classes})")
            edits.append((pid, cls))
        with self.lock:
            # all-or-nothing: validation happened above, apply in order
            for pid, cls in edits:
                if cls == -1:
                    self.labels.pop(pid, None)
                else:
                    self.labels[pid] = cls
            self.revision += 1
            return {"ok": True, "revision": self.revision}

    def commit(self) -> dict:
        with self.lock:
            items = sorted(
                (int(self.candidate_sources[pid]), cls) for pid, cls in self.labels.items()
            )
            label_set = SparseLabelSet(
                indices=np.array([i for i, _ in items], dtype=np.int64),
                labels=np.array([c for _, c in items], dtype=np.uint16),
                ratio=self.ratio,
                seed=self.seed,
                n=len(self.cloud),
                num_classes=self.cloud.num_classes,
            )
            export_label_file(label_set, self.out_path)
            return {"ok": True, "path": str(self.out_path), "count": len(items)}


class AnnotationHandler(BaseHTTPRequestHandler):
    state: AnnotationState = None
    frontend_dir: str | None = None

    def log_message(self, fmt, *args):
        pass

    def _send_json(self, obj, status=200):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, data, content_type="application/octet-stream"):
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        s = self.state
        if self.path == "/meta":
            self._send_json(s.meta())
        elif self.path == "/cloud/reference":
            self._send_bytes(_serialize_sqnc(s.reference))
        elif self.path == "/cloud/candidates":
            self._send_bytes(_serialize_sqnc(s.candidates))
        elif self.path == "/labels":
            self._send_json(s.get_labels())
        elif self.frontend_dir and self.path in ("/", "/index.html"):
            self._send_file(os.path.join(self.frontend_dir, "index.html"), "text/html")
        elif self.frontend_dir and not self.path.startswith("/cloud"):
            safe = os.path.normpath(self.path).lstrip("/")
            self._send_file(os.path.join(self.frontend_dir, safe))
        else:
            self._send_json({"ok": False, "error": "not found"}, status=404)

    def _send_file(self, path, content_type=None):
        if not os.path.isfile(path):
            self._send_json({"ok": False, "error": "not found"}, status=404)
            return
        if content_type is None:
            content_type = {
                ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
            }.get(os.path.splitext(path)[1], "application/octet-stream")
        with open(path, "rb") as f:
            self._send_bytes(f.read(), content_type)

    def do_POST(self):
        s = self.state
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw.decode("utf-8")) if raw.strip() else {}
        except json.JSONDecodeError as exc:
            self._send_json({"ok": False, "error": f"bad JSON: {exc}"}, status=400)
            return
        try:
            if self.path == "/labels":
                self._send_json(s.post_labels(body))
            elif self.path == "/commit":
                self._send_json(s.commit())
            else:
                self._send_json({"ok": False, "error": "not found"}, status=404)
        except ValueError as exc:
            self._send_json({"ok": False, "error": str(exc)}, status=400)


class AnnotationServer:
    def __init__(self, state: AnnotationState, port=0, frontend_dir=None):
        handler = type("BoundHandler", (AnnotationHandler,),
                       {"state": state, "frontend_dir": frontend_dir})
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.state = state
        self._thread = None

    @property
    def port(self):
        return self.httpd.server_address[1]

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self.httpd.serve_forever()


def serve_annotation(cloud: PointCloud, ratio: float, out_path, port=0, seed=0,
                     class_names=None, frontend_dir=None) -> AnnotationServer:
    state = AnnotationState(cloud, ratio, out_path, seed=seed, class_names=class_names)
    return AnnotationServer(state, port=port, frontend_dir=frontend_dir)
