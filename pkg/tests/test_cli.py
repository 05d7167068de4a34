import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tsdiffuse import forge
from tsdiffuse.cli import cmd_eval, cmd_forge, cmd_sample, cmd_train, main, pair_seed
from tsdiffuse.checkpoint import load_checkpoint
from tsdiffuse.errors import CorpusError
from tsdiffuse.evaluation import REPORT_ROWS

from conftest import small_config


def _quiet(*_):
    pass


def _write_small_corpus(path, n=64):
    recs = forge.synthetic_records()[::5][:n]
    forge.write_jsonl(recs, path / "synthetic_train.jsonl")
    forge.write_jsonl(forge.synthetic_records()[1::40], path / "synthetic_test.jsonl")
    return path


def _config_file(tmp_path, **extra):
    cfg = small_config(**extra)
    p = tmp_path / "run.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return p


class TestForge:
    def test_synthetic_only(self, tmp_path, small_cfg):
        out = cmd_forge(small_cfg, tmp_path, echo=_quiet)
        train, test = out["synthetic"]
        assert (len(train), len(test)) == (1645, 85)
        assert sorted(p.name for p in tmp_path.glob("*.jsonl")) == ["synthetic_test.jsonl", "synthetic_train.jsonl"]
        assert len((tmp_path / "synthetic_train.jsonl").read_text().splitlines()) == 1645

    def test_rerun_is_byte_identical(self, tmp_path, small_cfg):
        cmd_forge(small_cfg, tmp_path / "a", echo=_quiet)
        cmd_forge(small_cfg, tmp_path / "b", echo=_quiet)
        for name in ("synthetic_train.jsonl", "synthetic_test.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truce_pairs(self, tmp_path, small_cfg, rng):
        items = [{"series": rng.standard_normal(12).tolist(), "captions": [f"c{i} a", f"c{i} b", f"c{i} c"]} for i in range(2460)]
        src = tmp_path / "truce.jsonl"
        src.write_text("\n".join(json.dumps(i) for i in items) + "\n")
        out = cmd_forge(small_cfg, tmp_path / "corpus", truce=src, echo=_quiet)
        train, test = out["truce"]
        assert len(train) + len(test) == 7380
        assert (len(train), len(test)) == (7011, 369)
        assert (tmp_path / "corpus" / "truce_test.jsonl").exists()

    def test_prints_counts(self, tmp_path, small_cfg, capsys):
        assert main(["forge", "--out", str(tmp_path), "--seed", "0"]) == 0
        assert "synthetic: 346 series, 1730 pairs -> 1645 train / 85 test" in capsys.readouterr().out

    def test_unreadable_input(self, tmp_path, capsys):
        assert main(["forge", "--out", str(tmp_path), "--truce", str(tmp_path / "missing.json")]) == 1
        assert "missing.json" in capsys.readouterr().err

    def test_meta_carries_config_hash(self, tmp_path, small_cfg):
        cmd_forge(small_cfg, tmp_path, echo=_quiet)
        meta = json.loads((tmp_path / "synthetic_train.jsonl.meta.json").read_text())
        assert meta["config_hash"] == small_cfg.hash()


class TestTrain:
    def test_one_epoch(self, tmp_path):
        cfg = small_config(**{"trainer.epochs": 1, "trainer.batch_size": 64})
        corpus = _write_small_corpus(tmp_path / "corpus")
        cmd_train(cfg, corpus, tmp_path / "ck", echo=_quiet)
        assert sorted(p.name for p in (tmp_path / "ck").glob("epoch_*.tsd")) == ["epoch_0001.tsd"]
        rows = (tmp_path / "ck" / "loss.csv").read_text().splitlines()
        assert rows[0] == "step,epoch,loss"
        assert [r.split(",")[:2] for r in rows[1:]] == [["1", "1"]]
        assert (tmp_path / "ck" / "best.tsd").exists()

    def test_resume_continues_step_counter(self, tmp_path):
        cfg = small_config(**{"trainer.epochs": 2, "trainer.batch_size": 16})
        corpus = _write_small_corpus(tmp_path / "corpus")
        first = cmd_train(cfg, corpus, tmp_path / "ck", echo=_quiet)
        second = cmd_train(cfg, corpus, tmp_path / "ck", resume=tmp_path / "ck" / "epoch_0002.tsd", echo=_quiet)
        assert (first.step, second.step) == (8, 16)
        assert second.epoch == 4
        steps = [int(r.split(",")[0]) for r in (tmp_path / "ck" / "loss.csv").read_text().splitlines()[1:]]
        assert steps == list(range(1, 17))
        assert load_checkpoint(tmp_path / "ck" / "epoch_0004.tsd").step == 16

    def test_loss_csv_deterministic(self, tmp_path):
        cfg = small_config(**{"trainer.epochs": 2, "trainer.batch_size": 16})
        corpus = _write_small_corpus(tmp_path / "corpus")
        cmd_train(cfg, corpus, tmp_path / "a", echo=_quiet)
        cmd_train(cfg, corpus, tmp_path / "b", echo=_quiet)
        assert (tmp_path / "a" / "loss.csv").read_bytes() == (tmp_path / "b" / "loss.csv").read_bytes()
        assert (tmp_path / "a" / "epoch_0002.tsd").read_bytes() == (tmp_path / "b" / "epoch_0002.tsd").read_bytes()

    def test_schema_violation_names_line(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        good = forge.synthetic_records()[0].to_json()
        (corpus / "synthetic_train.jsonl").write_text(good + "\n" + good + "\n{\"id\": 1}\n")
        with pytest.raises(CorpusError, match="synthetic_train.jsonl:3"):
            cmd_train(small_config(), corpus, tmp_path / "ck", echo=_quiet)


@pytest.fixture(scope="module")
def checkpoint_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = small_config(**{"trainer.epochs": 1})
    corpus = _write_small_corpus(root / "corpus")
    cmd_train(cfg, corpus, root / "ck", echo=_quiet)
    return root / "ck" / "epoch_0001.tsd"


class TestSample:
    def test_csv_shape_and_svg(self, tmp_path, checkpoint_path):
        assert main(["sample", "--checkpoint", str(checkpoint_path), "--prompt", "a line increasing", "-n", "3",
                     "--seed", "4", "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "samples.csv").read_text().splitlines()
        assert len(rows) == 3 and all(len(r.split(",")) == 100 for r in rows)
        svgs = sorted(tmp_path.glob("*.svg"))
        assert len(svgs) == 3
        for svg in svgs:
            root = ET.fromstring(svg.read_text())
            assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1
            assert "a line increasing" in svg.read_text()

    def test_repeatable_bytes(self, tmp_path, checkpoint_path):
        cmd_sample(checkpoint_path, "a wave", 2, 7, tmp_path / "a")
        cmd_sample(checkpoint_path, "a wave", 2, 7, tmp_path / "b")
        assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()

    def test_version_mismatch_reported(self, tmp_path, checkpoint_path, capsys):
        raw = bytearray(checkpoint_path.read_bytes())
        raw[8] = 99
        bad = tmp_path / "bad.tsd"
        bad.write_bytes(bytes(raw))
        assert main(["sample", "--checkpoint", str(bad), "--prompt", "x", "--out", str(tmp_path)]) == 1
        assert "incompatible" in capsys.readouterr().err


class TestEval:
    def test_oracle_all_zero(self, tmp_path, small_cfg):
        cmd_forge(small_cfg, tmp_path / "corpus", echo=_quiet)
        assert main(["eval", "--oracle", "--corpus", str(tmp_path / "corpus"), "--out", str(tmp_path / "rep")]) == 0
        lines = (tmp_path / "rep" / "report.csv").read_text().splitlines()
        subsets = [l.split(",")[0] for l in lines[1::2]]
        assert subsets == ["short", "medium", "long", "creative", "resembles", "all"]
        assert all(float(l.split(",")[2]) == 0.0 for l in lines[1:])

    def test_type_filter(self, tmp_path, small_cfg):
        cmd_forge(small_cfg, tmp_path / "corpus", echo=_quiet)
        report = cmd_eval(None, tmp_path / "corpus", tmp_path / "rep", oracle=True, types=["short", "long"])
        assert [r.subset for r in report.rows] == ["short", "long", "all"]
        assert report.row("all").count == 34

    def test_model_eval_is_reproducible(self, tmp_path, checkpoint_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        forge.write_jsonl(forge.synthetic_records()[::173], corpus / "synthetic_test.jsonl")
        a = cmd_eval(load_checkpoint(checkpoint_path), corpus, tmp_path / "a", seed=3)
        b = cmd_eval(load_checkpoint(checkpoint_path), corpus, tmp_path / "b", seed=3)
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
        assert a.row("all").count == 10
        assert a.row("all").ed > 0

    def test_empty_test_set(self, tmp_path, capsys):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        (corpus / "x_test.jsonl").write_text("")
        assert main(["eval", "--oracle", "--corpus", str(corpus), "--out", str(tmp_path)]) == 1
        assert "empty" in capsys.readouterr().err

    def test_unknown_type_flag(self, tmp_path, capsys):
        assert main(["eval", "--oracle", "--types", "short,poem", "--corpus", str(tmp_path)]) == 1


def test_pair_seed_stable():
    assert pair_seed(0, "a") == pair_seed(0, "a")
    assert pair_seed(0, "a") != pair_seed(1, "a")
    assert pair_seed(0, "a") != pair_seed(0, "b")
