import json

import pytest

from genfeat import cli
from genfeat.cli import (
    EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, NumericError, RunConfig, UsageError, main,
    parse_config, read_scores,
)

from pipeline import TINY_SETTINGS, cli as run_cli, primary_artifacts, write_toy_corpus

SCORES = {
    "orig": [89.77, 89.41, 88.88], "pca": [91.68, 89.92, 89.19], "vae": [95.61, 94.30, 94.28],
    "gan": [96.76, 95.34, 94.75], "aae": [98.42, 97.12, 95.01], "bert": [99.06, 97.43, 95.13],
}


@pytest.fixture
def scores_csv(tmp_path):
    path = tmp_path / "scores.csv"
    rows = ["group,value"] + [f"{g},{v}" for g, vs in SCORES.items() for v in vs]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def prepared(tmp_path):
    """Output directory holding corpus.jsonl, split.json and the encoded corpus."""
    out = tmp_path / "run"
    corpus = write_toy_corpus(tmp_path / "c.csv")
    assert run_cli("corpus-ingest", out, TINY_SETTINGS, "--set", f"corpus={corpus}") == 0
    for command in ("corpus-split", "preprocess"):
        assert run_cli(command, out, TINY_SETTINGS) == 0
    return out


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path, scores_csv):
        conf = tmp_path / "empty.conf"
        conf.write_text("", encoding="utf-8")
        cfg = parse_config(conf, {"scores": str(scores_csv)}, env={}, command="stats-anova")
        expected = RunConfig(scores=str(scores_csv))
        assert cfg == expected

    def test_flag_overrides_file(self, tmp_path):
        conf = tmp_path / "a.conf"
        conf.write_text("# comment\nunits = 48\nseed=3\n", encoding="utf-8")
        assert parse_config(conf, env={}).units == 48
        assert parse_config(conf, {"units": "96"}, env={}).units == 96

    def test_unknown_key_suggestion(self, tmp_path):
        conf = tmp_path / "a.conf"
        conf.write_text("batchsize = 3\n", encoding="utf-8")
        with pytest.raises(UsageError, match="batch_size"):
            parse_config(conf, env={})
        with pytest.raises(UsageError, match="batch_size"):
            parse_config(None, {"classifier_batchsize": 3}, env={})

    def test_seed_precedence(self, tmp_path):
        conf = tmp_path / "a.conf"
        conf.write_text("seed = 3\n", encoding="utf-8")
        assert parse_config(conf, env={}).seed == 3
        assert parse_config(conf, env={"GENFEAT_SEED": "5"}).seed == 5
        assert parse_config(conf, {"seed": 9}, env={"GENFEAT_SEED": "5"}).seed == 9
        assert parse_config(None, {"seed": None}, env={"GENFEAT_SEED": "5"}).seed == 5

    @pytest.mark.parametrize("overrides", [{"seed": -1}, {"seed": 2 ** 64},
                                           {"extractor": "bert"}, {"units": "many"},
                                           {"train_fraction": 0.9}])
    def test_invalid_values(self, overrides):
        with pytest.raises(UsageError):
            parse_config(None, overrides, env={})

    def test_missing_paths(self, tmp_path):
        with pytest.raises(UsageError):
            parse_config(None, {}, env={}, command="corpus-ingest")
        with pytest.raises(cli.DataError):
            parse_config(None, {"corpus": str(tmp_path / "nope.csv")}, env={})

    def test_digest_ignores_out(self):
        assert RunConfig(out="a").digest() == RunConfig(out="b").digest()
        assert RunConfig(seed=1).digest() != RunConfig(seed=2).digest()


class TestStatsCommands:
    def test_anova_prints_f(self, tmp_path, scores_csv, capsys):
        code = main(["stats-anova", "--out", str(tmp_path), "--set", f"scores={scores_csv}"])
        assert code == EXIT_OK
        assert "19.87" in capsys.readouterr().out
        payload = json.loads((tmp_path / "anova.json").read_text(encoding="utf-8"))
        assert payload["anova"][0]["F"] == pytest.approx(19.87, abs=0.05)
        assert (tmp_path / "anova.json.meta.json").is_file()

    def test_tukey(self, tmp_path, scores_csv, capsys):
        assert main(["stats-tukey", "--out", str(tmp_path),
                     "--set", f"scores={scores_csv}"]) == EXIT_OK
        assert len(json.loads((tmp_path / "tukey.json").read_text())["tukey"]) == 15

    def test_read_scores_order_and_errors(self, tmp_path, scores_csv):
        assert list(read_scores(scores_csv)) == list(SCORES)
        bad = tmp_path / "bad.csv"
        bad.write_text("group,value\na,x\n", encoding="utf-8")
        with pytest.raises(cli.DataError):
            read_scores(bad)


class TestDeterminism:
    def test_split_twice(self, tmp_path):
        corpus = write_toy_corpus(tmp_path / "c.csv")
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli("corpus-ingest", out, {}, "--set", f"corpus={corpus}") == 0
            assert run_cli("corpus-split", out, {}, "--seed", "7") == 0
            outputs.append((out / "split.json").read_bytes())
        assert outputs[0] == outputs[1]

    def test_split_depends_on_seed(self, tmp_path):
        corpus = write_toy_corpus(tmp_path / "c.csv")
        out = tmp_path / "a"
        run_cli("corpus-ingest", out, {}, "--set", f"corpus={corpus}")
        run_cli("corpus-split", out, {}, "--seed", "7")
        first = (out / "split.json").read_bytes()
        run_cli("corpus-split", out, {}, "--seed", "8")
        assert (out / "split.json").read_bytes() != first

    def test_extract_vae_twice(self, prepared):
        flags = ("--extractor", "vae", "--deterministic")
        assert run_cli("train-extractor", prepared, TINY_SETTINGS, *flags) == 0
        blobs = []
        for _ in range(2):
            assert run_cli("extract", prepared, TINY_SETTINGS, *flags) == 0
            blobs.append({n: b for n, b in primary_artifacts(prepared).items()
                          if n.startswith("features-vae")})
        assert blobs[0] == blobs[1] and len(blobs[0]) == 3

    def test_inputs_not_mutated(self, prepared):
        before = primary_artifacts(prepared)
        assert run_cli("train-extractor", prepared, TINY_SETTINGS, "--extractor", "pca") == 0
        after = primary_artifacts(prepared)
        assert all(after[name] == blob for name, blob in before.items())


class TestErrors:
    def test_usage_exit(self, tmp_path, capsys):
        assert main(["stats-anova", "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["no-such-command"]) == EXIT_USAGE
        assert main(["report", "--set", "batchsize=3"]) == EXIT_USAGE
        err = capsys.readouterr().err.strip().splitlines()[-1]
        assert json.loads(err)["error"] == "usage" and "batch_size" in err

    def test_data_exit(self, tmp_path, capsys):
        assert main(["corpus-split", "--out", str(tmp_path)]) == EXIT_DATA
        assert json.loads(capsys.readouterr().err)["error"] == "data"

    def test_numeric_exit_removes_partial_outputs(self, tmp_path, monkeypatch, capsys):
        def failing(run):
            run.output("anova.json").write_text("partial", encoding="utf-8")
            raise NumericError("non-finite values in test")

        monkeypatch.setitem(cli.HANDLERS, "report", failing)
        assert main(["report", "--out", str(tmp_path)]) == EXIT_NUMERIC
        assert not (tmp_path / "anova.json").exists()
        assert json.loads(capsys.readouterr().err)["error"] == "numeric"

    def test_data_failure_removes_partial_outputs(self, prepared):
        assert run_cli("train-extractor", prepared, TINY_SETTINGS, "--extractor", "pca") == 0
        (prepared / "encoded.jsonl").write_text("{not json\n", encoding="utf-8")
        assert run_cli("extract", prepared, TINY_SETTINGS, "--extractor", "pca") == EXIT_DATA
        assert not list(prepared.glob("features-pca*"))

    def test_help_is_success(self, capsys):
        assert main(["--help"]) == EXIT_OK
