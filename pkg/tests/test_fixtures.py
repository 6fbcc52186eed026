import json

import pytest

from sealrank.errors import FixtureError
from sealrank.fixtures import load_fixture, make_sim_fixture, validate_fixture
from sealrank.sim import generate_world


@pytest.fixture
def fixture_dir(tmp_path):
    w = generate_world(3, 6, seed=1)
    make_sim_fixture(w, 6).save(tmp_path / "fx")
    return tmp_path / "fx"


def rewrite_outputs(path, keep):
    lines = (path / "outputs.jsonl").read_text().splitlines()
    (path / "outputs.jsonl").write_text("".join(l + "\n" for l in lines if keep(json.loads(l))))


def test_complete_fixture_ok(fixture_dir):
    assert validate_fixture(fixture_dir) == []
    fx = load_fixture(fixture_dir)
    assert len(fx.tasks) == 6 and len(fx.pool) == 3


def test_missing_output_names_task_and_candidate(fixture_dir):
    cand = load_fixture(fixture_dir).pool[1]
    rewrite_outputs(fixture_dir, lambda r: not (r["task_id"] == "task_0005" and r["candidate_id"] == cand))
    problems = validate_fixture(fixture_dir)
    assert any("task_0005" in p and cand in p for p in problems)
    with pytest.raises(FixtureError):
        load_fixture(fixture_dir)


def test_duplicate_task_id(fixture_dir):
    manifest = json.loads((fixture_dir / "manifest.json").read_text())
    manifest["tasks"].append(dict(manifest["tasks"][0]))
    (fixture_dir / "manifest.json").write_text(json.dumps(manifest))
    assert any("duplicate task id" in p for p in validate_fixture(fixture_dir))


def test_unsupported_task_type_and_missing_native(fixture_dir):
    manifest = json.loads((fixture_dir / "manifest.json").read_text())
    manifest["tasks"][0]["task_type"] = "poetry"
    manifest["candidates"][0]["native_score"] = None
    (fixture_dir / "manifest.json").write_text(json.dumps(manifest))
    problems = validate_fixture(fixture_dir)
    assert any("poetry" in p for p in problems) and any("no native score" in p for p in problems)


def test_unreadable_fixture(tmp_path):
    with pytest.raises(FixtureError):
        validate_fixture(tmp_path / "nowhere")


def test_sim_fixture_is_seeded():
    w = generate_world(8, 6, seed=3)
    a, b = make_sim_fixture(w, 4, seed=1), make_sim_fixture(w, 4, seed=1)
    assert a.native_scores == b.native_scores
    assert all(0.0 <= s <= 1.0 for s in a.native_scores.values())
