import pytest

from emoimage import archive
from emoimage.cli import main
from emoimage.clip import Emotion
from emoimage.dataset import write_wav
from emoimage.report import parse_metrics

from conftest import synthetic_corpus

TINY = ["--set", "train.classifier_hidden=32", "--set", "train.epochs=1", "--set", "data.test_speakers=['04']"]


@pytest.fixture(scope="module")
def wav_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("emodb")
    for clip in synthetic_corpus({e: 2 for e in Emotion}, seconds=(0.4, 0.6), seed=3):
        write_wav(root / f"{clip.clip_id}.wav", clip.samples)
    return root


def test_mock_weights(tmp_path, capsys):
    out = tmp_path / "w.vggw"
    assert main(["mock-weights", "--out", str(out), "--seed", "2"]) == 0
    assert capsys.readouterr().out.startswith("wrote\t")
    tensors = archive.read_archive(out)
    assert tensors["conv5_3.weight"].shape == (512, 512, 3, 3) and "bn5_3.running_var" in tensors


def test_error_line_and_exit_code(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    kind, name, message = err[0].split("\t")
    assert kind == "error" and name == "ValueError" and "--data-root" in message


def test_bad_override_is_reported(tmp_path, capsys, wav_dir):
    assert main(["train", "--data-root", str(wav_dir), "--out", str(tmp_path), "--set", "train.nope=1"]) == 1
    assert "unknown TrainConfig keys" in capsys.readouterr().err


def test_extract(tmp_path, capsys, wav_dir):
    with pytest.warns(UserWarning):
        assert main(["extract", "--data-root", str(wav_dir), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("extracted\t14\t")
    assert len(list((tmp_path / "features").glob("*.f32"))) == 14


def test_train_evaluate_report(tmp_path, capsys, wav_dir, mock_archive):
    run = tmp_path / "run"
    with pytest.warns(UserWarning):
        code = main(["train", "--data-root", str(wav_dir), "--weights", str(mock_archive), "--out", str(run), *TINY])
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1].split("\t")
    assert line[0] == "Model-A" and line[3] == "accuracy"
    metrics = parse_metrics(run / "metrics.txt")
    assert metrics["n_test"] == 7 and "epoch.0.test_accuracy" in metrics
    for name in ("summary.tsv", "confusion.png", "curves.png", "config.json", "split_manifest.tsv", "best.vggw"):
        assert (run / name).exists(), name

    with pytest.warns(UserWarning):
        code = main(["evaluate", "--data-root", str(wav_dir), "--checkpoint", str(run / "best.vggw"),
                     "--manifest", str(run / "split_manifest.tsv"), "--out", str(tmp_path / "eval"), *TINY])
    assert code == 0
    out = capsys.readouterr().out.split("\t")
    assert float(out[1]) == pytest.approx(metrics["accuracy"], abs=5e-5) and out[3].strip() == "7"

    assert main(["report", "--metrics", str(run / "metrics.txt"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "confusion.png").exists()
    again = parse_metrics(tmp_path / "again" / "metrics.txt")
    assert again["accuracy"] == metrics["accuracy"]


def test_order_search_cli(tmp_path, capsys, wav_dir):
    with pytest.warns(UserWarning):
        code = main(["order-search", "--data-root", str(wav_dir), "--out", str(tmp_path), "--folds", "2",
                     "--set", "data.test_speakers=['04']"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("ranked\t720\tshortlist\t")
    rows = (tmp_path / "order_ranking.tsv").read_text().splitlines()
    assert len(rows) == 721


def test_ablate_cli(tmp_path, capsys, wav_dir, monkeypatch):
    import numpy as np

    from emoimage import experiments
    from emoimage.report import RunReport

    def fake(cfg, data, weights=None, out_dir=None, manifest_path=None):
        return RunReport(cfg.variant, cfg.train.seed, {"A": 0.8, "E": 0.6}[cfg.variant] + cfg.train.seed / 100,
                         np.eye(7, dtype=np.int64), manifest=str(manifest_path))

    monkeypatch.setattr(experiments, "run_experiment", fake)
    with pytest.warns(UserWarning):
        code = main(["ablate", "--data-root", str(wav_dir), "--out", str(tmp_path), "--variants", "E,A",
                     "--seeds", "1,2", "--set", "data.test_speakers=['04']"])
    assert code == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0].startswith("variant\truns") and rows[1].startswith("Model-A\t2\t0\t0.8150")
    assert rows[2].startswith("Model-E")
    assert (tmp_path / "ablation.png").exists() and (tmp_path / "model-E" / "seed-2" / "metrics.txt").exists()
