import json
import threading
import urllib.request

import numpy as np
import pytest

from sqn.cloud import PointCloud, load_cloud, sample_count
from sqn.labels import import_label_file
from sqn.scenes import SceneSpec, synth_scene
from sqn.service import serve_annotation


def _get(port, path):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as r:
        return r.read()


def _get_json(port, path):
    return json.loads(_get(port, path))


def _post(port, path, obj):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}",
        data=json.dumps(obj).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


@pytest.fixture
def live(tmp_path):
    cloud = synth_scene(SceneSpec(seed=0, points_per_class=(400, 300, 200, 100)))
    out = tmp_path / "session.sqnl"
    server = serve_annotation(cloud, ratio=0.05, out_path=out, seed=3).start()
    yield server, cloud, out
    server.stop()


def test_meta_and_candidate_count(live):
    server, cloud, _ = live
    meta = _get_json(server.port, "/meta")
    assert meta["n"] == sample_count(len(cloud), 0.05)
    assert meta["c"] == 4
    assert meta["ratio"] == 0.05
    assert len(meta["class_names"]) == 4


def test_candidate_payload_is_sqnc(live, tmp_path):
    server, cloud, _ = live
    raw = _get(server.port, "/cloud/candidates")
    path = tmp_path / "cand.sqnc"
    path.write_bytes(raw)
    cand = load_cloud(path)
    assert len(cand) == sample_count(len(cloud), 0.05)
    assert cand.gt_labels is None  # ground truth never leaks to the annotator
    ref = tmp_path / "ref.sqnc"
    ref.write_bytes(_get(server.port, "/cloud/reference"))
    reference = load_cloud(ref)
    assert len(reference) == len(cloud)
    # candidates are rows of the served cloud in stable id order
    assert np.isin(cand.positions, reference.positions).all()


def test_label_post_and_roundtrip(live):
    server, cloud, out = live
    status, resp = _post(server.port, "/labels", {"points": [{"id": 0, "class": 2}]})
    assert status == 200 and resp["ok"]
    labels = _get_json(server.port, "/labels")
    assert labels["points"] == [{"id": 0, "class": 2}]
    status, resp = _post(server.port, "/commit", {})
    assert status == 200 and resp["count"] == 1
    ls = import_label_file(out)
    assert len(ls) == 1
    assert ls.n == len(cloud)
    src = server.state.candidate_sources[0]
    assert ls.indices[0] == src and ls.labels[0] == 2


def test_invalid_submissions_rejected_state_unchanged(live):
    server, _, _ = live
    before = _get_json(server.port, "/labels")
    for bad in (
        {"points": [{"id": 0, "class": 99}]},          # class >= C
        {"points": [{"id": 10 ** 9, "class": 0}]},     # id out of range
        {"points": [{"id": 0.5, "class": 0}]},         # non-integer id
        {"points": "nope"},
        {"points": [{"id": 1}]},
    ):
        status, resp = _post(server.port, "/labels", bad)
        assert status == 400 and not resp["ok"]
    assert _get_json(server.port, "/labels") == before


def test_overwrite_and_clear(live):
    server, _, _ = live
    _post(server.port, "/labels", {"points": [{"id": 4, "class": 1}]})
    _post(server.port, "/labels", {"points": [{"id": 4, "class": 3}]})
    assert _get_json(server.port, "/labels")["points"] == [{"id": 4, "class": 3}]
    _post(server.port, "/labels", {"points": [{"id": 4, "class": -1}]})
    assert _get_json(server.port, "/labels")["points"] == []


def test_revision_counts_mutations(live):
    server, _, _ = live
    r0 = _get_json(server.port, "/labels")["revision"]
    _post(server.port, "/labels", {"points": [{"id": 1, "class": 0}]})
    _post(server.port, "/labels", {"points": [{"id": 2, "class": 1}]})
    assert _get_json(server.port, "/labels")["revision"] == r0 + 2


def test_concurrent_posts_serialized(live):
    server, _, _ = live
    n_threads, per_thread = 8, 5

    def worker(tid):
        for i in range(per_thread):
            _post(server.port, "/labels",
                  {"points": [{"id": tid * per_thread + i, "class": 1}]})

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(n_threads)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    labels = _get_json(server.port, "/labels")
    assert len(labels["points"]) == n_threads * per_thread
    status, resp = _post(server.port, "/commit", {})
    assert resp["count"] == n_threads * per_thread


def test_unknown_route_404(live):
    server, _, _ = live
    with pytest.raises(urllib.error.HTTPError):
        _get(server.port, "/nope")
