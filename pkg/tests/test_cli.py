import pytest

from fake_lm import FakeLMServer
from zsrec import cli
from zsrec.bpr import FactorModel
from zsrec.scorer import fit_ngram


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def files(synth_paths):
    return ["--ratings", synth_paths["ratings"], "--movies", synth_paths["movies"]]


def test_prepare(capsys, tmp_path, files):
    code, out, _ = run(capsys, "prepare", *files, "--out-dir", tmp_path)
    assert code == 0
    stats = dict(line.split("\t") for line in out.splitlines())
    assert stats["filtered_users"] == "115" and stats["test_users"] == "23"
    assert (tmp_path / "instances.jsonl").read_text().count("\n") == 23
    assert "seed = 0" in (tmp_path / "config.resolved").read_text()


def test_prepare_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "prepare", "--ratings", tmp_path / "nope.dat", "--movies", tmp_path / "m.dat")
    assert code == 2 and "nope.dat" in err


def test_prepare_bad_config(capsys, files, tmp_path):
    code, _, err = run(capsys, "prepare", *files, "--out-dir", tmp_path, "--set", "min_pos=abc")
    assert code == 2 and "min_pos" in err


def test_prepare_is_byte_stable(capsys, tmp_path, files):
    for d in ("a", "b"):
        assert run(capsys, "prepare", *files, "--out-dir", tmp_path / d, "--seed", 5)[0] == 0
    assert (tmp_path / "a" / "instances.jsonl").read_bytes() == (tmp_path / "b" / "instances.jsonl").read_bytes()


def test_mine(capsys, tmp_path, synth_paths):
    code, out, _ = run(
        capsys, "mine", "--movies", synth_paths["movies"], "--corpus", synth_paths["corpus"], "--out-dir", tmp_path, "--top-k", 5
    )
    assert code == 0
    rows = [line.split("\t") for line in out.splitlines()]
    assert len(rows) == 5
    counts = [int(c) for _, c in rows]
    assert counts == sorted(counts, reverse=True)
    assert "<m> , <m>" in [p for p, _ in rows]
    assert (tmp_path / "patterns.tsv").read_text() == out


def test_mine_empty_corpus_warns(capsys, caplog, tmp_path, synth_paths):
    corpus = tmp_path / "empty.txt"
    corpus.write_text("nothing to see here\n")
    code, out, _ = run(capsys, "mine", "--movies", synth_paths["movies"], "--corpus", corpus, "--out-dir", tmp_path)
    assert code == 0 and out == "" and "no catalog titles" in caplog.text


def test_train_bpr_and_reload(capsys, tmp_path, files):
    code, out, _ = run(capsys, "train-bpr", *files, "--out-dir", tmp_path, "--epochs", 5, "--d", 4)
    assert code == 0
    model = FactorModel.load(tmp_path / "bpr_model.npz")
    assert model.d == 4
    assert (tmp_path / "train_log.tsv").read_text().count("\n") == 6
    code, out2, _ = run(
        capsys, "eval", *files, "--scorer", "bpr", "--model-path", tmp_path / "bpr_model.npz", "--out-dir", tmp_path / "e"
    )
    assert code == 0
    map_train = float(dict(l.split("\t") for l in out.splitlines())["map_at_1"])
    assert float(out2.splitlines()[1].split("\t")[1]) == map_train


def test_train_bpr_invalid_d(capsys, tmp_path, files):
    code, _, err = run(capsys, "train-bpr", *files, "--out-dir", tmp_path, "--d", 0)
    assert code == 2 and "d" in err


def test_eval_random(capsys, tmp_path, files):
    code, out, _ = run(capsys, "eval", *files, "--scorer", "random", "--out-dir", tmp_path)
    assert code == 0
    header, row = out.splitlines()
    assert header.startswith("param\tmap_at_1")
    assert row.split("\t")[5] == "23"
    summary = (tmp_path / "summary.txt").read_text()
    assert "scorer=random(seed=0)" in summary
    assert (tmp_path / "per_user.tsv").read_text().count("\n") == 24


def test_sweep_context(capsys, tmp_path, files, synth_paths):
    code, out, _ = run(
        capsys, "sweep", "--kind", "context", *files, "--corpus", synth_paths["corpus"], "--scorer", "ngram",
        "--sizes", "0,5", "--out-dir", tmp_path,
    )
    assert code == 0
    lines = (tmp_path / "fig2_context.tsv").read_text().splitlines()
    assert [l.split("\t")[0] for l in lines[1:]] == ["0", "5"]


def test_sweep_requires_kind(capsys, files):
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", *map(str, files)])
    assert exc.value.code == 2


def test_complete_remote(capsys, tmp_path, synth_paths, monkeypatch):
    monkeypatch.delenv("ZSREC_ENDPOINT", raising=False)
    movies = tmp_path / "movies.dat"
    movies.write_bytes(b"1::King Arthur (2004)::Action\n2::Jackass 2 (2006)::Comedy\n3::Heat (1995)::Crime\n")
    with FakeLMServer(fit_ngram(["a b"])) as server:
        code, out, _ = run(
            capsys, "complete", "--scorer", "remote", "--endpoint", server.url, "--movies", movies,
            "--prompt", "Movies like Heat:", "--max-tokens", 8, "--out-dir", tmp_path,
        )
    assert code == 0
    items = [l.split("\t")[1] for l in out.splitlines() if l.startswith("item\t")]
    assert items == ["1", "2"]
    assert server.requests[0][1]["greedy"] is True


def test_complete_needs_remote(capsys, tmp_path, synth_paths):
    code, _, err = run(capsys, "complete", "--scorer", "ngram", "--movies", synth_paths["movies"], "--prompt", "x")
    assert code == 2 and "remote" in err


def test_unreachable_remote_strict(capsys, tmp_path, files, monkeypatch):
    monkeypatch.delenv("ZSREC_ENDPOINT", raising=False)
    endpoint = "http://127.0.0.1:9"
    code, _, err = run(
        capsys, "eval", *files, "--scorer", "remote", "--endpoint", endpoint, "--strict", "--out-dir", tmp_path,
        "--set", "max_retries=0",
    )
    assert code == 1 and endpoint in err


def test_remote_without_endpoint(capsys, tmp_path, files, monkeypatch):
    monkeypatch.delenv("ZSREC_ENDPOINT", raising=False)
    code, _, err = run(capsys, "eval", *files, "--scorer", "remote", "--out-dir", tmp_path)
    assert code == 2 and "ZSREC_ENDPOINT" in err


def test_config_file(capsys, tmp_path, files):
    conf = tmp_path / "run.conf"
    conf.write_text("# demo\nscorer = random\nseed = 7\n")
    code, out, _ = run(capsys, "eval", *files, "--config", conf, "--out-dir", tmp_path)
    assert code == 0 and out.splitlines()[1].endswith("\t7")
    code, out, _ = run(capsys, "eval", *files, "--config", conf, "--seed", 8, "--out-dir", tmp_path)
    assert out.splitlines()[1].endswith("\t8")


def test_synth(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--out-dir", tmp_path, "--users", 30)
    assert code == 0 and (tmp_path / "ratings.dat").exists()
