import numpy as np
import pytest

from sqn.cli import configs_from_mapping, main, parse_config_text
from sqn.cloud import load_cloud
from sqn.labels import import_label_file
from sqn.metrics import EvalReport

TINY_CONFIG = """
# desk-tiny training setup
level_dims = 4,8,8,8
k_enc = 6
head_widths = 16
epochs = 3
retrain = false
seed = 0
"""


def test_parse_config_text():
    kv = parse_config_text("a=1\n# comment\nb = two\n\nc=3 # tail\n")
    assert kv == {"a": "1", "b": "two", "c": "3"}
    with pytest.raises(ValueError):
        parse_config_text("nonsense line")


def test_configs_from_mapping_defaults():
    enc, qc, tc = configs_from_mapping({})
    assert enc.level_dims == (8, 16, 32, 64)
    assert qc.k == 3 and qc.head_widths == (256, 128, 96)
    assert tc.epochs == 200 and tc.retrain_with_pseudo is None


def test_configs_from_mapping_overrides():
    enc, qc, tc = configs_from_mapping(
        {"level_dims": "4,4,4,4", "k": "5", "retrain": "true", "lr": "0.02",
         "levels": "1,4", "augment": "false"}
    )
    assert enc.level_dims == (4, 4, 4, 4)
    assert qc.k == 5 and qc.levels == (1, 4)
    assert tc.retrain_with_pseudo is True and tc.lr == 0.02 and not tc.augment


def test_synth_labels_train_infer_eval_round_trip(tmp_path):
    scene = tmp_path / "scene.sqnc"
    labels = tmp_path / "labels.sqnl"
    cfg = tmp_path / "train.cfg"
    ckpt = tmp_path / "model.sqnw"
    log = tmp_path / "log.csv"
    pred = tmp_path / "pred.sqnp"
    report = tmp_path / "report.csv"
    cfg.write_text(TINY_CONFIG)

    assert main(["synth", "--out", str(scene), "--seed", "1", "--points", "900"]) == 0
    cloud = load_cloud(scene)
    assert 850 <= len(cloud) <= 950

    assert main(["label-sample", "--cloud", str(scene), "--ratio", "0.02",
                 "--seed", "2", "--out", str(labels)]) == 0
    ls = import_label_file(labels)
    assert len(ls) == round(0.02 * len(cloud))

    assert main(["train", "--cloud", str(scene), "--labels", str(labels),
                 "--config", str(cfg), "--out", str(ckpt), "--log", str(log)]) == 0
    assert ckpt.exists() and log.exists()
    assert log.read_text().startswith("epoch,loss,train_acc,seconds")

    assert main(["infer", "--ckpt", str(ckpt), "--cloud", str(scene),
                 "--out", str(pred)]) == 0
    lines = pred.read_text().strip().splitlines()
    assert len(lines) == len(cloud)
    assert all(0 <= int(v) < cloud.num_classes for v in lines)

    assert main(["eval", "--ckpt", str(ckpt), "--cloud", str(scene),
                 "--out", str(report), "--boundary-radius", "0.2"]) == 0
    rep = EvalReport.from_csv(report.read_text())
    assert 0.0 <= rep.overall["miou"] <= 1.0
    assert 0.2 in rep.boundary


def test_infer_with_ascii_queries(tmp_path):
    scene = tmp_path / "scene.sqnc"
    labels = tmp_path / "l.sqnl"
    cfg = tmp_path / "c.cfg"
    ckpt = tmp_path / "m.sqnw"
    queries = tmp_path / "q.xyz"
    pred = tmp_path / "p.sqnp"
    cfg.write_text(TINY_CONFIG)
    main(["synth", "--out", str(scene), "--seed", "3", "--points", "900"])
    main(["label-sample", "--cloud", str(scene), "--ratio", "0.02", "--out", str(labels)])
    main(["train", "--cloud", str(scene), "--labels", str(labels),
          "--config", str(cfg), "--out", str(ckpt)])
    queries.write_text("1 1 0.1\n4 4 1.0\n2 2 2.9\n")
    assert main(["infer", "--ckpt", str(ckpt), "--cloud", str(scene),
                 "--queries", str(queries), "--out", str(pred)]) == 0
    assert len(pred.read_text().strip().splitlines()) == 3


def test_convert_and_gridsample(tmp_path):
    xyz = tmp_path / "in.xyz"
    sqnc = tmp_path / "out.sqnc"
    back = tmp_path / "back.xyz"
    ds = tmp_path / "ds.sqnc"
    xyz.write_text("0 0 0 10 20 30 1\n0.1 0 0 10 20 30 1\n5 5 5 1 2 3 0\n")
    assert main(["convert", "--in", str(xyz), "--out", str(sqnc)]) == 0
    cloud = load_cloud(sqnc)
    assert len(cloud) == 3 and cloud.num_classes == 2
    assert main(["convert", "--in", str(sqnc), "--out", str(back)]) == 0
    again = load_cloud(back, "xyz")
    assert np.allclose(again.positions, cloud.positions)
    assert main(["gridsample", "--cloud", str(sqnc), "--cell", "1.0",
                 "--out", str(ds)]) == 0
    assert len(load_cloud(ds)) == 2  # two occupied cells


def test_sweep_commands_write_outputs(tmp_path):
    scene = tmp_path / "scene.sqnc"
    cfg = tmp_path / "c.cfg"
    cfg.write_text(TINY_CONFIG.replace("epochs = 3", "epochs = 2"))
    main(["synth", "--out", str(scene), "--seed", "4", "--points", "900"])
    out = tmp_path / "sweep"
    assert main(["sweep-k", "--cloud", str(scene), "--config", str(cfg),
                 "--ratio", "0.02", "--ks", "1,3", "--out", str(out)]) == 0
    assert (out / "k_sweep.csv").exists()
    assert (out / "k_sweep.html").exists()
    text = (out / "k_sweep.csv").read_text()
    assert text.startswith("cell,oa,miou,iou_0")
    assert len(text.strip().splitlines()) == 3
