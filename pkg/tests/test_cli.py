import csv
import io
import json

import pytest

from preflabel import experiments as ex
from preflabel.cli import build_parser, main, resolve_config
from preflabel.config import RunConfig
from preflabel.graphs import cycle_graph, write_edge_list
from preflabel.nn import Arch, init_model

TINY = ["--train-count", "24", "--test-count", "12", "--epochs", "2", "--hidden", "6", "--layers", "2"]


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestRunConfig:
    def test_json_round_trip(self):
        cfg = RunConfig(task="sat", strategy="random", K=1, lr=3e-4, train_data="x", complement_edges=False)
        assert RunConfig.from_json(cfg.to_json()) == cfg

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_json('{"bogus": 1}')

    @pytest.mark.parametrize("kw", [{"task": "tsp"}, {"strategy": "x"}, {"inference_mode": "vote"}, {"K": 0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)

    def test_table_sizes(self):
        assert RunConfig(task="mis", n_max=16).table_sizes() == (16,)
        assert RunConfig(task="sat", var_max=8, clause_ratio=4.0).table_sizes() == (16, 32)

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.json"
        RunConfig(K=3, epochs=7).save(path)
        args = build_parser().parse_args(["train", "--config", str(path), "--k", "5", "--no-complement-edges"])
        cfg = resolve_config(args)
        assert (cfg.K, cfg.epochs, cfg.complement_edges) == (5, 7, False)


class TestCommands:
    def test_generate_and_evaluate_from_files(self, tmp_path, capsys):
        assert main(["generate", "mis", "--count", "10", "--split", "test", "--out", str(tmp_path / "t.txt")]) == 0
        assert (tmp_path / "t.txt.config.json").exists()
        ckpt = tmp_path / "m.ckpt"
        assert main(["train", "--out", str(ckpt), "--report", str(tmp_path / "r.csv"), *TINY]) == 0
        assert rows((tmp_path / "r.csv").read_text())[0].keys() == {"epoch", "mean_loss", "min_loss_gap", "seconds"}
        capsys.readouterr()
        assert main(["evaluate", "mis", "--ckpt", str(ckpt), "--test-data", str(tmp_path / "t.txt"), "--m", "2"]) == 0
        (row,) = rows(capsys.readouterr().out)
        assert row["metric"] == "accuracy" and row["m"] == "2" and 0 <= float(row["value"]) <= 1

    def test_generate_sat(self, tmp_path):
        assert main(["generate", "sat", "--count", "5", "--out", str(tmp_path / "s")]) == 0
        assert len(ex.load_dataset("sat", tmp_path / "s")) == 5

    def test_predict_csv(self, tmp_path, capsys):
        ckpt = tmp_path / "m.ckpt"
        main(["train", "--out", str(ckpt), "--report", str(tmp_path / "r.csv"), *TINY])
        write_edge_list(cycle_graph(5), tmp_path / "c5.txt")
        capsys.readouterr()
        assert main(["predict", "--ckpt", str(ckpt), "--graph", str(tmp_path / "c5.txt"), "--exhaustive"]) == 0
        out = rows(capsys.readouterr().out)
        assert [r["node"] for r in out] == ["0", "1", "2", "3", "4"]
        assert all(r["class"] in "01" and 0.5 <= float(r["probability"]) <= 1 for r in out)

    def test_predict_cnf(self, tmp_path, capsys):
        ckpt = tmp_path / "s.ckpt"
        main(["train", "--task", "sat", "--out", str(ckpt), "--report", str(tmp_path / "r.csv"), *TINY])
        (tmp_path / "f.cnf").write_text("p cnf 2 2\n-1 0\n1 -2 0\n")
        capsys.readouterr()
        assert main(["predict", "--ckpt", str(ckpt), "--graph", str(tmp_path / "f.cnf"), "--m", "3"]) == 0
        assert len(rows(capsys.readouterr().out)) == 6

    def test_stage_tagged_failure(self, tmp_path, capsys):
        assert main(["predict", "--ckpt", str(tmp_path / "none.ckpt"), "--graph", "x"]) != 0
        assert "error [load-checkpoint]" in capsys.readouterr().err
        (tmp_path / "bad.txt").write_text("3 1\n0 0\n")
        ckpt = tmp_path / "m.ckpt"
        main(["train", "--out", str(ckpt), "--report", str(tmp_path / "r.csv"), *TINY])
        assert main(["predict", "--ckpt", str(ckpt), "--graph", str(tmp_path / "bad.txt")]) != 0
        assert "error [read-input]: line 2" in capsys.readouterr().err

    def test_run_is_reproducible(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert main(["run", "--strategy", "same", "--seed", "1", "--out", str(tmp_path / d), *TINY]) == 0
        for name in ("metrics.csv", "model.ckpt", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        (row,) = rows((tmp_path / "a" / "metrics.csv").read_text())
        assert (row["task"], row["strategy"], row["metric"]) == ("mis", "same", "accuracy")
        saved = json.loads((tmp_path / "a" / "config.json").read_text())
        assert saved["strategy"] == "same" and saved["seed"] == 1

    def test_sweep_missing_checkpoint_names_it(self, tmp_path, capsys):
        code = main(["sweep", "--m-values", "1", "--k-values", "3", "--ckpt-dir", str(tmp_path), *TINY])
        assert code != 0
        assert "mis_preferential_K3_seed0.ckpt" in capsys.readouterr().err

    def test_sweep_trains_and_reuses(self, tmp_path, capsys):
        args = ["sweep", "--m-values", "1,2", "--k-values", "1,2", "--ckpt-dir", str(tmp_path), *TINY]
        assert main([*args, "--train-missing"]) == 0
        first = capsys.readouterr().out
        assert (tmp_path / "mis_preferential_K2_seed0.ckpt").exists()
        assert main(args) == 0
        assert capsys.readouterr().out == first
        assert [(r["K"], r["m"]) for r in rows(first)] == [("1", "1"), ("1", "2"), ("2", "1"), ("2", "2")]

    def test_equivariance_command(self, tmp_path, capsys):
        ckpt = tmp_path / "m.ckpt"
        main(["train", "--out", str(ckpt), "--report", str(tmp_path / "r.csv"), *TINY])
        capsys.readouterr()
        assert main(["equivariance", "--ckpt", str(ckpt), "--count", "3", "--sampled-m", "0"]) == 0
        captured = capsys.readouterr()
        table = rows(captured.out)
        assert all(r["passed"] == r["permutations"] for r in table)
        assert "exhaustive:" in captured.err


@pytest.fixture(scope="module")
def setup():
    cfg = RunConfig(train_count=30, test_count=15, epochs=2, hidden=6, layers=2, K=1)
    return cfg, ex.dataset_for(cfg, "test")


class TestSweepSemantics:
    def test_repeated_m_gives_identical_rows(self, setup):
        cfg, test = setup
        out = ex.cmd_sweep(cfg, [3, 3], train_missing=True, test_instances=test)
        assert out[0] == out[1]

    def test_preferential_k1_equals_random(self, setup):
        cfg, test = setup
        out = ex.cmd_sweep(cfg, [1], [1], ["preferential", "random"], train_missing=True, test_instances=test)
        assert out[0].metric == out[1].metric

    def test_missing_without_directory(self, setup):
        cfg, test = setup
        with pytest.raises(FileNotFoundError, match="strategy=random K=1"):
            ex.cmd_sweep(cfg, [1], strategies=["random"], test_instances=test)


class TestEquivarianceAudit:
    def test_same_embedding_is_strict(self, rng):
        model = init_model(Arch(layers=2, hidden=5, table_sizes=(6,), dropout=0.0), rng)
        graphs = ex.random_small_graphs(4, seed=2)
        report = ex.cmd_equivariance(model, graphs, "same", sampled_m=None)
        assert report.strict == report.total == report.passed

    def test_preferential_all_pass(self, rng):
        model = init_model(Arch(layers=2, hidden=5, table_sizes=(6,), dropout=0.0), rng)
        graphs = ex.random_small_graphs(4, seed=3)
        report = ex.cmd_equivariance(model, graphs, "preferential", sampled_m=2)
        assert report.passed == report.total
        assert report.sampled_passed < report.total
        assert report.to_csv().splitlines()[0].startswith("graph,n,edges,automorphisms")
