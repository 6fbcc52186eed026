import csv
import io
import json
from pathlib import Path

import pytest

from sealrank.cli import main
from sealrank.errors import ConfigError, ResumeConflictError
from sealrank.evolution import EvolutionPolicy
from sealrank.fixtures import make_sim_fixture
from sealrank.ledger import PROTOCOLS, theoretical_calls
from sealrank.runner import RunConfig, run_benchmark, run_protocols
from sealrank.sim import LatentWorld, SimBackend, generate_world

VOLATILE = {"log.jsonl", "timings.jsonl", "config.json"}


def snapshot(run_dir: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(run_dir)): p.read_bytes()
        for p in sorted(run_dir.rglob("*"))
        if p.is_file() and p.name not in VOLATILE
    }


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.fixture(scope="module")
def sim_inputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("inputs")
    world = generate_world(8, 6, seed=21, low=0.85, high=0.95, noise_sigma=0.03, tie_band=0.02)
    world.save(base / "world.json")
    make_sim_fixture(world, 20, seed=2).save(base / "fx")
    return base


def config(sim_inputs, out, **kw):
    kw.setdefault("protocols", PROTOCOLS)
    return RunConfig(fixture=str(sim_inputs / "fx"), world=str(sim_inputs / "world.json"), out=str(out), **kw)


def test_two_protocol_run(sim_inputs, tmp_path):
    art = run_benchmark(config(sim_inputs, tmp_path, protocols=("seal", "full_pair"), run_id="r"))
    assert set(art.leaderboards) == {"seal", "full_pair"}
    agreement = read_csv(tmp_path / "r" / "reports" / "agreement.csv")
    assert {r["protocol"] for r in agreement} == {"seal", "full_pair"}
    assert (tmp_path / "r" / "ledger.jsonl").read_text().count("\n") == len(art.events)
    for name in ("tradeoff.png", "ranks.png", "report.txt", "cost_summary.csv", "leaderboards.csv"):
        assert (tmp_path / "r" / "reports" / name).stat().st_size > 0


def test_tradeoff_rows_and_calls(sim_inputs, tmp_path):
    six = tuple(p for p in PROTOCOLS if p != "original")
    run_benchmark(config(sim_inputs, tmp_path, protocols=six, run_id="r"))
    rows = read_csv(tmp_path / "r" / "reports" / "tradeoff.csv")
    assert len(rows) == 6
    by = {r["protocol"]: r for r in rows}
    assert float(by["full_pair"]["calls_per_task"]) == 28
    assert float(by["flat_bracket"]["calls_per_task"]) == 8
    assert float(by["listwise"]["calls_per_task"]) == 1
    assert float(by["pointwise"]["calls_per_task"]) == 8


def test_observed_calls_match_theory(sim_inputs):
    from sealrank.fixtures import load_fixture

    fx = load_fixture(sim_inputs / "fx")
    world = LatentWorld.load(sim_inputs / "world.json")
    art = run_protocols(fx, SimBackend(world), PROTOCOLS)
    m = len(fx.tasks)
    for p in ("original", "listwise", "pointwise", "flat_bracket", "full_pair"):
        assert art.calls_per_task(p) == theoretical_calls(p, 8, m)
    assert art.calls_per_task("fixed_rubric") == pytest.approx(theoretical_calls("fixed_rubric", 8, m))
    evolve = sum(len(v) for v in art.runs["seal"].evolution_events.values())
    assert art.calls_per_task("seal") == pytest.approx(8 + evolve / m)


def test_reproducible_and_worker_independent(sim_inputs, tmp_path):
    a = run_benchmark(config(sim_inputs, tmp_path / "a", run_id="r"))
    b = run_benchmark(config(sim_inputs, tmp_path / "b", run_id="r", workers=4))
    assert snapshot(a.run_dir) == snapshot(b.run_dir)


def test_protocol_isolation(sim_inputs, tmp_path):
    full = run_benchmark(config(sim_inputs, tmp_path / "all", run_id="r"))
    only = run_benchmark(config(sim_inputs, tmp_path / "one", protocols=("seal",), run_id="r"))
    for rel in ("results/seal.jsonl", "matches/seal.jsonl"):
        assert (full.run_dir / rel).read_bytes() == (only.run_dir / rel).read_bytes()


def test_config_conflict(sim_inputs, tmp_path):
    run_benchmark(config(sim_inputs, tmp_path, protocols=("listwise",), run_id="r"))
    with pytest.raises(ResumeConflictError):
        run_benchmark(config(sim_inputs, tmp_path, protocols=("pointwise",), run_id="r"))


def test_config_validation(sim_inputs, tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(fixture=str(sim_inputs / "fx"), backend="sim")
    with pytest.raises(ConfigError):
        RunConfig(fixture=str(tmp_path / "missing"), world=str(sim_inputs / "world.json"))
    with pytest.raises(ConfigError):
        RunConfig(fixture=str(sim_inputs / "fx"), backend="live", endpoint="http://x")
    with pytest.raises(ConfigError):
        config(sim_inputs, tmp_path, protocols=("elo",))


def test_config_roundtrip(sim_inputs, tmp_path):
    c = config(sim_inputs, tmp_path, evolution=EvolutionPolicy(max_items_per_task=2), k=3)
    again = RunConfig.from_dict(json.loads(json.dumps(c.to_dict())))
    assert again == c and again.content_hash() == c.content_hash()


def test_inverted_native_metric_gives_negative_rho(tmp_path):
    world = generate_world(8, 6, seed=4, noise_sigma=0.01, tie_band=0.005)
    fx = make_sim_fixture(world, 10, native_noise=0.0)
    fx.native_scores = {c: round(1.8 - s, 3) for c, s in fx.native_scores.items()}
    art = run_protocols(fx, SimBackend(world), ("original", "full_pair"))
    from sealrank.report import agreement_rows

    rows = {r["protocol"]: r for r in agreement_rows(art)}
    assert rows["original"]["spearman_vs_full_pair"] < 0


def test_cli_end_to_end(tmp_path, capsys):
    world, fx, out = tmp_path / "w.json", tmp_path / "fx", tmp_path / "runs"
    assert main(["make-world", "--out", str(world), "--fixture-out", str(fx), "--tasks", "6", "--noise", "0.02",
                 "--tie-band", "0.01", "--task-type", "math_reasoning"]) == 0
    assert main(["validate", "--fixture", str(fx)]) == 0
    args = ["run", "--fixture", str(fx), "--world", str(world), "--out", str(out), "--run-id", "x",
            "--protocols", "seal,flat_bracket,full_pair", "--subsample-fraction", "0.5", "--subsample-seeds", "5"]
    assert main(args) == 0
    run_dir = out / "x"
    before = snapshot(run_dir)
    assert (run_dir / "reports" / "stability.csv").exists()
    assert main(["report", "--run-dir", str(run_dir)]) == 0
    assert main(["resume", "--run-dir", str(run_dir)]) == 0
    assert snapshot(run_dir) == before
    capsys.readouterr()
    assert main(["stability", "--run-dir", str(run_dir), "--subsample-fraction", "0.5", "--subsample-seeds", "4"]) == 0
    assert capsys.readouterr().out.startswith("benchmark,tasks,subsample_size")
    assert main(["stability", "--run-dir", str(run_dir), str(run_dir)]) == 0
    assert "1.0000,1.0000,1/1" in capsys.readouterr().out
    assert main(args[:-4] + ["--protocols", "listwise"]) == 2


def test_cli_validate_reports_problems(tmp_path, capsys):
    world = generate_world(3, 6, seed=1)
    fx = make_sim_fixture(world, 2)
    del fx.outputs[("task_0001", fx.pool[0])]
    fx.save(tmp_path / "fx")
    assert main(["validate", "--fixture", str(tmp_path / "fx")]) == 1
    assert "missing output for task task_0001" in capsys.readouterr().out


def test_report_refuses_incomplete_run(sim_inputs, tmp_path):
    c = config(sim_inputs, tmp_path, protocols=("listwise",), run_id="r")
    run_benchmark(c)
    (tmp_path / "r" / "log.jsonl").write_text("")
    assert main(["report", "--run-dir", str(tmp_path / "r")]) == 2


def test_report_keeps_truth_column(sim_inputs, tmp_path):
    run_benchmark(config(sim_inputs, tmp_path, protocols=("seal", "full_pair"), run_id="r"))
    before = (tmp_path / "r" / "reports" / "agreement.csv").read_bytes()
    assert main(["report", "--run-dir", str(tmp_path / "r")]) == 0
    after = (tmp_path / "r" / "reports" / "agreement.csv").read_bytes()
    assert after == before
    assert all(r["spearman_vs_truth"] for r in read_csv(tmp_path / "r" / "reports" / "agreement.csv"))
