import csv
import json

import pytest

from qroute.circuit import read_circuit
from qroute.cli import main
from qroute.policy import RLPolicy
from qroute.qnet import QNetwork


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest=")
    return lines[0], list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize("shape,with_empty", [("2x2", 7), ("1x2", 2), ("2x3", 22)])
def test_count_matchings(capsys, shape, with_empty):
    code, out, _ = run(capsys, "count-matchings", "--grid", shape)
    assert code == 0
    assert out.split() == ["with-empty", str(with_empty), "without-empty", str(with_empty - 1)]


def test_count_matchings_graph_file(capsys, tmp_path):
    p = tmp_path / "tri.txt"
    p.write_text("3\n0 1\n1 2\n0 2\n")
    code, out, _ = run(capsys, "count-matchings", "--graph", str(p))
    assert code == 0 and "with-empty 4" in out


def test_malformed_graph_reports_line(capsys, tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("4\n0 1\n1 x\n")
    code, _, err = run(capsys, "count-matchings", "--graph", str(p))
    assert code == 2
    assert f"{p}:3:" in err


def test_usage_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 2
    code, _, err = run(capsys, "count-matchings", "--grid", "4by4")
    assert code == 2
    code, _, err = run(capsys, "train", "--gamma", "1.5", "--out", str(tmp_path))
    assert code == 2 and "gamma" in err
    code, _, err = run(capsys, "eval", "--policy", "rl", "--out", str(tmp_path))
    assert code == 2 and "--model" in err


def test_missing_model_is_runtime_error(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--policy", "rl", "--model", str(tmp_path / "nope.npz"),
                       "--out", str(tmp_path))
    assert code == 1


def test_gen_circuit(capsys, tmp_path):
    p = tmp_path / "c.txt"
    code, _, _ = run(capsys, "gen-circuit", "--kind", "random", "--qubits", "16", "--interactions", "16",
                     "--seed", "3", "--out", str(p))
    assert code == 0
    c = read_circuit(p)
    assert c.qubit_count == 16 and len(c) == 16
    run(capsys, "gen-circuit", "--kind", "random", "--qubits", "16", "--seed", "3", "--out", str(tmp_path / "d.txt"))
    assert (tmp_path / "d.txt").read_text() == p.read_text()
    code, out, _ = run(capsys, "gen-circuit", "--kind", "single-layer", "--grid", "2x2")
    assert out.split()[0] == "4" and len(out.splitlines()) == 3


def test_eval_sortnet_constant(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--policy", "sortnet", "--grid", "4x4", "--family", "single-layer",
                       "-n", "100", "--out", str(tmp_path))
    assert code == 0
    header, rows = read_csv(tmp_path / "eval-sortnet-episodes.csv")
    assert "eval-sortnet.manifest.json" in header
    assert {r["layers"] for r in rows} == {"12"}
    _, (summary,) = read_csv(tmp_path / "eval-sortnet.csv")
    assert float(summary["std"]) == 0.0
    manifest = json.loads((tmp_path / "eval-sortnet.manifest.json").read_text())
    assert manifest["subcommand"] == "eval" and manifest["seed"] == 0
    assert str(tmp_path / "eval-sortnet.csv") in manifest["outputs"]


def test_eval_random_on_empty_circuit(capsys, tmp_path):
    c = tmp_path / "empty.txt"
    c.write_text("16\n")
    code, out, _ = run(capsys, "eval", "--policy", "random", "--circuit", str(c), "-n", "5", "--out", str(tmp_path))
    assert code == 0
    _, (row,) = read_csv(tmp_path / "eval-random.csv")
    assert float(row["mean"]) == 0.0


def test_eval_trace(capsys, tmp_path):
    trace = tmp_path / "trace.jsonl"
    code, _, _ = run(capsys, "eval", "--policy", "random", "--grid", "2x3", "-n", "2", "--trace", str(trace),
                     "--out", str(tmp_path))
    assert code == 0
    recs = [json.loads(line) for line in trace.read_text().splitlines()]
    assert recs and set(recs[0]) == {"episode", "layer", "swaps", "gates_fired", "reward"}


def test_train_zero_episodes(capsys, tmp_path):
    code, _, _ = run(capsys, "train", "--grid", "2x3", "--episodes", "0", "--out", str(tmp_path))
    assert code == 0
    net = QNetwork.load(tmp_path / "model.npz")
    assert net.input_dim == 6
    header, rows = read_csv(tmp_path / "curve.csv")
    assert rows == []
    assert (tmp_path / "curve.csv").read_text().splitlines()[1] == "episode,layers,loss,epsilon"


def test_train_value_bound_flag(capsys, tmp_path):
    code, _, _ = run(capsys, "train", "--grid", "2x2", "--episodes", "0", "--value-bound", "off",
                     "--out", str(tmp_path))
    assert code == 0
    net = QNetwork.load(tmp_path / "model.npz")
    assert net.metadata["config"]["value_bound"] is False
    assert RLPolicy(net).value_bound is False


def test_train_rerun_byte_identical(capsys, tmp_path):
    args = ["train", "--grid", "2x3", "--episodes", "15", "--batch-size", "4", "--anneal-iters", "20",
            "--seed", "5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b))[0] == 0
    # the manifest names its outputs, so compare everything after the comment line
    strip = lambda p: p.read_text().split("\n", 1)[1]  # noqa: E731
    assert strip(a / "curve.csv") == strip(b / "curve.csv")
    assert len(read_csv(a / "curve.csv")[1]) == 15


def test_train_same_manifest_identical_csv(capsys, tmp_path):
    args = ["train", "--grid", "2x2", "--episodes", "10", "--batch-size", "4", "--anneal-iters", "20",
            "--out", str(tmp_path)]
    run(capsys, *args)
    first = (tmp_path / "curve.csv").read_bytes()
    run(capsys, *args)
    assert (tmp_path / "curve.csv").read_bytes() == first


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"episodes": 3, "gamma": 0.5, "batch_size": 2}))
    code, _, _ = run(capsys, "train", "--grid", "2x2", "--config", str(cfg), "--gamma", "0.7", "--out", str(tmp_path))
    assert code == 0
    manifest = json.loads((tmp_path / "train.manifest.json").read_text())
    assert manifest["config"]["gamma"] == 0.7
    assert manifest["config"]["episodes"] == 3
    assert str(cfg) in manifest["inputs"]
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 2 and "bogus" in err


def test_eval_dimension_mismatch(capsys, tmp_path):
    run(capsys, "train", "--grid", "2x2", "--episodes", "0", "--out", str(tmp_path))
    code, _, err = run(capsys, "eval", "--policy", "rl", "--model", str(tmp_path / "model.npz"), "--grid", "3x3",
                       "--out", str(tmp_path))
    assert code == 1 and "4" in err and "9" in err


def test_eval_rl_forced_on_off(capsys, tmp_path):
    run(capsys, "train", "--grid", "2x3", "--episodes", "0", "--out", str(tmp_path))
    model = str(tmp_path / "model.npz")
    for flag in ("on", "off"):
        code, _, _ = run(capsys, "eval", "--policy", "rl", "--model", model, "--grid", "2x3", "-n", "3",
                         "--anneal-iters", "30", "--forced-swaps", flag, "--out", str(tmp_path))
        assert code == 0
    assert (tmp_path / "eval-rl-forced.csv").exists() and (tmp_path / "eval-rl-unforced.csv").exists()


def test_bench_single_row_reproducible(capsys, tmp_path):
    args = ["bench", "--grid", "4x4", "--policies", "sortnet", "--families", "single-layer", "-n", "1",
            "--seed", "9", "--out", str(tmp_path)]
    assert run(capsys, *args)[0] == 0
    first = (tmp_path / "bench.csv").read_bytes()
    _, rows = read_csv(tmp_path / "bench.csv")
    assert len(rows) == 1 and rows[0]["policy"] == "sortnet"
    assert run(capsys, *args)[0] == 0
    assert (tmp_path / "bench.csv").read_bytes() == first


def test_bench_threads_match(capsys, tmp_path):
    base = ["bench", "--grid", "3x3", "--policies", "random", "--families", "random", "--interactions", "6",
            "-n", "6", "--seed", "2"]
    run(capsys, *base, "--out", str(tmp_path / "a"))
    run(capsys, *base, "--threads", "3", "--out", str(tmp_path / "b"))
    assert read_csv(tmp_path / "a" / "bench.csv")[1] == read_csv(tmp_path / "b" / "bench.csv")[1]


def test_global_flags_before_subcommand(capsys, tmp_path):
    code, out, _ = run(capsys, "--grid", "2x2", "count-matchings")
    assert code == 0 and "with-empty 7" in out
