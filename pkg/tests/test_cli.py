"""Command line: exit codes, artifacts, reports, byte-determinism."""

import json
from pathlib import Path

import numpy as np
import pytest
from jsonschema import Draft202012Validator

from hsmoe import cli, dataio, engine
from hsmoe.engine import FilterConfig
from hsmoe.exceptions import FilterDegeneracyError
from hsmoe.expert import Observation, nig_log_predictive, nig_prior, nig_update

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def validator(name):
    return Draft202012Validator(json.loads((SCHEMA_DIR / name).read_text()))


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture()
def dataset(tmp_path):
    path = str(tmp_path / "data.csv")
    assert run_cli("simulate", "--K", "3", "--s", "2", "--n", "30", "--d", "2",
                   "--seed", "5", "--output", path,
                   "--truth-out", str(tmp_path / "truth.json")) == 0
    return path


class TestSimulate:
    def test_preset_writes_full_dataset(self, tmp_path):
        out = tmp_path / "d.csv"
        truth = tmp_path / "t.json"
        assert run_cli("simulate", "--preset", "table1", "--seed", "7",
                       "--output", str(out), "--truth-out", str(truth)) == 0
        X, y, z = dataio.read_dataset_csv(str(out))
        assert X.shape == (500, 5) and z is not None
        doc = json.loads(truth.read_text())
        assert len(doc["betas"]) == 10 and doc["config"]["seed"] == 7

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{rep}.csv"
            tr = tmp_path / f"{rep}.json"
            run_cli("simulate", "--K", "3", "--n", "10", "--d", "2", "--seed", "1",
                    "--output", str(out), "--truth-out", str(tr))
            outs.append((out.read_bytes(), tr.read_bytes()))
        assert outs[0] == outs[1]

    def test_missing_output_dir_is_usage_error(self, tmp_path):
        missing = tmp_path / "no_such_dir" / "d.csv"
        code = run_cli("simulate", "--n", "5", "--output", str(missing),
                       "--truth-out", str(tmp_path / "t.json"))
        assert code == 2
        assert not missing.exists()
        assert not (tmp_path / "no_such_dir").exists()


class TestFit:
    def test_report_is_valid_and_artifacts_written(self, dataset, tmp_path):
        report = tmp_path / "report.json"
        alloc = tmp_path / "freqs.csv"
        state = tmp_path / "state.json"
        code = run_cli("fit", "--data", dataset, "--K", "3", "--particles", "10",
                       "--seed", "2", "--output", str(report),
                       "--alloc-out", str(alloc), "--save-state", str(state))
        assert code == 0
        doc = json.loads(report.read_text())
        validator("fit_report.schema.json").validate(doc)
        freqs = np.array(doc["allocation_frequencies"])
        assert freqs.shape == (3,) and freqs.sum() == pytest.approx(1.0, abs=1e-9)
        assert len(doc["ess"]["trace"]) == 30
        assert "wall_time_s" not in doc
        assert alloc.read_text().startswith("expert,frequency\n")
        fs = dataio.load_state(str(state))
        assert fs.t == 30

    def test_single_expert_matches_exact_oracle(self, dataset, tmp_path):
        report = tmp_path / "report.json"
        run_cli("fit", "--data", dataset, "--K", "1", "--particles", "20",
                "--seed", "3", "--output", str(report))
        doc = json.loads(report.read_text())
        X, y, _ = dataio.read_dataset_csv(dataset)
        s = nig_prior(np.zeros(2), np.eye(2), 1.0, 1.0)
        oracle = 0.0
        for i in range(len(y)):
            obs = Observation(x=X[i], y=y[i])
            oracle += nig_log_predictive(s, obs)
            s = nig_update(s, obs)
        assert doc["log_marginal_likelihood"] == pytest.approx(oracle, abs=1e-8)

    def test_byte_identity_across_runs_and_threads(self, dataset, tmp_path):
        blobs = []
        for tag, threads in (("r1", "1"), ("r2", "1"), ("r3", "3")):
            report = tmp_path / f"{tag}.json"
            state = tmp_path / f"{tag}_state.json"
            run_cli("fit", "--data", dataset, "--K", "2", "--particles", "8",
                    "--seed", "4", "--threads", threads,
                    "--output", str(report), "--save-state", str(state))
            blobs.append((report.read_bytes(), state.read_bytes()))
        assert blobs[0] == blobs[1] == blobs[2]

    def test_stdout_report_when_no_output(self, dataset, capsys):
        assert run_cli("fit", "--data", dataset, "--K", "2", "--particles", "5",
                       "--seed", "1") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["command"] == "fit"

    def test_timing_flag_adds_wall_time(self, dataset, tmp_path):
        report = tmp_path / "r.json"
        run_cli("fit", "--data", dataset, "--K", "2", "--particles", "5",
                "--seed", "1", "--output", str(report), "--timing")
        doc = json.loads(report.read_text())
        validator("fit_report.schema.json").validate(doc)
        assert doc["wall_time_s"] >= 0

    def test_malformed_csv_exits_2_naming_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x_1,y\n0.4,0.5\n0.1,oops\n")
        assert run_cli("fit", "--data", str(bad), "--K", "1") == 2
        err = capsys.readouterr().err
        assert "row 3" in err and "'y'" in err

    def test_missing_data_file_exits_2(self, tmp_path):
        assert run_cli("fit", "--data", str(tmp_path / "nope.csv"), "--K", "1") == 2

    def test_degeneracy_exit_code(self, dataset, monkeypatch, capsys):
        def boom(config, data, dim=None):
            raise FilterDegeneracyError("all predictive weights underflowed at t=3")

        monkeypatch.setattr(engine, "run", boom)
        assert run_cli("fit", "--data", dataset, "--K", "2") == 3
        assert "degeneracy" in capsys.readouterr().err


class TestSelect:
    def test_table_and_winner(self, dataset, tmp_path):
        out = tmp_path / "sel.json"
        code = run_cli("select", "--data", dataset, "--K", "1,2,3",
                       "--particles", "10", "--seed", "6", "--output", str(out))
        assert code == 0
        doc = json.loads(out.read_text())
        validator("select_report.schema.json").validate(doc)
        ks = [r["n_experts"] for r in doc["rows"]]
        assert ks == [1, 2, 3]
        best = max(doc["rows"], key=lambda r: r["log_marginal_likelihood"])
        assert doc["winner"] == best["n_experts"]
        flags = [r["winner"] for r in doc["rows"]]
        assert sum(flags) == 1 and doc["rows"][ks.index(doc["winner"])]["winner"]

    def test_csv_output(self, dataset, tmp_path):
        out = tmp_path / "sel.csv"
        run_cli("select", "--data", dataset, "--K", "1,2", "--particles", "8",
                "--seed", "6", "--output", str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "K,log_ml,winner"
        assert len(lines) == 3

    def test_repeat_is_identical(self, dataset, tmp_path):
        texts = []
        for tag in ("a", "b"):
            out = tmp_path / f"{tag}.json"
            run_cli("select", "--data", dataset, "--K", "1,2", "--particles", "8",
                    "--seed", "6", "--output", str(out))
            texts.append(out.read_bytes())
        assert texts[0] == texts[1]

    def test_bad_k_list_exits_2(self, dataset):
        assert run_cli("select", "--data", dataset, "--K", "1,x") == 2


class TestScore:
    @pytest.fixture()
    def state_file(self, dataset, tmp_path):
        state = tmp_path / "state.json"
        run_cli("fit", "--data", dataset, "--K", "3", "--particles", "15",
                "--seed", "2", "--save-state", str(state))
        return str(state)

    def test_alpha_zero_ranks_by_mean_logit(self, state_file, tmp_path):
        out = tmp_path / "score.json"
        assert run_cli("score", "--state", state_file, "--x", "0.5,-1.0",
                       "--alpha", "0", "--top-k", "3", "--output", str(out)) == 0
        doc = json.loads(out.read_text())
        validator("score_report.schema.json").validate(doc)
        fs = dataio.load_state(state_file)
        scores = engine.expert_scores(fs, np.array([0.5, -1.0]), 0.0)
        expected = (np.argsort(-scores, kind="stable") + 1).tolist()
        assert doc["top_k"] == expected
        np.testing.assert_allclose(doc["scores"], scores)

    def test_top_1(self, state_file, capsys):
        assert run_cli("score", "--state", state_file, "--x", "1.0,0.0") == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["top_k"]) == 1

    def test_alpha_demotes_high_variance_expert(self, tmp_path):
        # stick 1 has a larger particle spread than stick 2; raising alpha
        # must eventually flip their ranking, at the predictable threshold
        fs = engine.init_filter(FilterConfig(n_particles=2, n_experts=3, seed=0), dim=1)
        fs.phi[:, 0, 0] = [3.0, -1.0]  # mean 1.0, sd 2.0
        fs.phi[:, 1, 0] = [0.5, 0.5]  # mean 0.5, sd 0
        state = tmp_path / "crafted.json"
        dataio.save_state(fs, str(state))
        x = "1.0"

        def top(alpha):
            out = tmp_path / f"s{alpha}.json"
            run_cli("score", "--state", str(state), "--x", x, "--alpha", str(alpha),
                    "--top-k", "1", "--output", str(out))
            return json.loads(out.read_text())["top_k"][0]

        # flip threshold: (1.0 - 0.5) / 2.0 = 0.25
        assert top(0.0) == 1
        assert top(0.2) == 1
        assert top(0.3) == 2

    def test_dimension_mismatch_exits_2(self, state_file):
        assert run_cli("score", "--state", state_file, "--x", "1.0") == 2

    def test_missing_state_exits_2(self, tmp_path):
        assert run_cli("score", "--state", str(tmp_path / "none.json"), "--x", "1") == 2
