import csv
import itertools
import json

import numpy as np
import pytest

from persuade import cli, harness
from persuade.errors import MalformedInstanceError, NumericalFailure
from persuade.harness import ExperimentConfig, adversary_sequence, generate_instance, run_acceptance, run_experiment
from persuade.model import dump_instance, validate_instance


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generation_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    dump_instance(generate_instance("coverage", 2, 1, 2, 7), a)
    dump_instance(generate_instance("coverage", 2, 1, 2, 7), b)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("family", ["coverage", "concave_cardinality", "table"])
def test_generated_instances_validate(family):
    for seed in range(5):
        inst = generate_instance(family, 3, 2, 2, seed)
        assert validate_instance(inst) == []
        assert all(abs(u).max() <= 1 for u in inst.utility_diff)


def test_concave_increments():
    inst = generate_instance("concave_cardinality", 5, 1, 2, 3)
    assert all(f.increments_ok() for f in inst.sender_functions)


def test_table_flag_matches_exhaustive_check():
    inst = generate_instance("table", 3, 1, 1, 2)
    f = inst.sender_functions[0]
    ok = True
    for a, b in itertools.product(range(8), repeat=2):
        ok &= f.value(a & b) + f.value(a | b) <= f.value(a) + f.value(b) + 1e-12
    assert f.submodular is True and ok


def test_generator_rejects_bad_sizes():
    with pytest.raises(MalformedInstanceError):
        generate_instance("coverage", 0, 1, 1, 0)
    with pytest.raises(MalformedInstanceError):
        generate_instance("lattice", 2, 1, 1, 0)


def test_tiny_experiment(tmp_path):
    cfg = ExperimentConfig(instance="tiny", T=100, output_dir=str(tmp_path))
    summary = run_experiment(cfg)
    assert summary["regret"] <= 15 and summary["bound"] == pytest.approx(15.0) and summary["pass"]
    rows = _rows(tmp_path / "run.csv")
    assert len(rows) == 100
    cum = np.cumsum([float(r["utility"]) for r in rows])
    assert np.allclose(cum, [float(r["cum_utility"]) for r in rows], atol=1e-9)
    saved = json.loads((tmp_path / "summary.json").read_text())
    assert saved["config"]["T"] == 100 and saved["alpha"] == 1.0
    assert "states" in json.loads((tmp_path / "scheme_final.json").read_text())


def test_single_round(tmp_path):
    run_experiment(ExperimentConfig(instance="tiny", T=1, output_dir=str(tmp_path)))
    assert len(_rows(tmp_path / "run.csv")) == 1


def test_cycle_adversary(tmp_path):
    spec = {"family": "coverage", "n": 2, "m": 2, "d": 2, "seed": 3}
    cfg = ExperimentConfig(instance=spec, T=12, adversary={"kind": "cycle", "profiles": [[0, 0], [1, 0], [1, 1]]}, output_dir=str(tmp_path))
    run_experiment(cfg)
    distinct = [int(r["distinct_profiles"]) for r in _rows(tmp_path / "run.csv")]
    assert distinct == sorted(distinct) and distinct[-1] == 3


def test_experiments_are_deterministic(tmp_path):
    spec = {"family": "table", "n": 2, "m": 2, "d": 2, "seed": 1}
    out = []
    for name in ("a", "b"):
        cfg = ExperimentConfig(instance=spec, T=15, adversary={"kind": "random"}, output_dir=str(tmp_path / name), seed=4)
        run_experiment(cfg)
        out.append([(r["profile_id"], r["utility"]) for r in _rows(tmp_path / name / "run.csv")])
    assert out[0] == out[1]


def test_adversary_validation(tiny):
    with pytest.raises(MalformedInstanceError):
        adversary_sequence(tiny, {"kind": "cycle", "profiles": [[1]]}, 5, 0)
    with pytest.raises(ValueError):
        adversary_sequence(tiny, {"kind": "constant", "profiles": [[0], [0]]}, 5, 0)


@pytest.mark.parametrize("bad", [{"T": 0}, {"eta": 1.5}, {"eps": -0.1}, {"oracle": "magic"}, {"adversary": {"kind": "sneaky"}}])
def test_config_validation(bad):
    data = {"instance": "tiny", "T": 10, **bad}
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(data)


def test_config_defaults():
    cfg = ExperimentConfig(instance="tiny", T=400)
    assert cfg.eta == pytest.approx(0.05) and cfg.eps == pytest.approx(1 / 400)


def test_error_record_written(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalFailure("synthetic")

    monkeypatch.setattr(harness, "run_ogd", boom)
    with pytest.raises(NumericalFailure):
        run_experiment(ExperimentConfig(instance="tiny", T=3, output_dir=str(tmp_path)))
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "NumericalFailure"


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_acceptance("vibes")


def test_submodularity_suite_passes():
    results = run_acceptance("submodularity", seed=1)
    assert [r.criterion for r in results] == [5] and all(r.passed for r in results)


def test_threads_env(monkeypatch):
    monkeypatch.setenv("PERSUADE_THREADS", "3")
    assert harness.suite_workers() == 3
    monkeypatch.setenv("PERSUADE_THREADS", "many")
    assert harness.suite_workers() == 1


def test_sampler_points_are_dominated(tiny):
    sampler = harness.RewardSampler(tiny, 1.0, 0)
    pts = sampler.sample_array(200)
    assert np.all(pts >= 0) and np.all(pts <= 0.75 + 1e-9)


# command line ----------------------------------------------------------------


def test_cli_gen_and_run(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    assert cli.main(["gen", "--family", "coverage", "--n", "2", "--m", "2", "--d", "2", "--seed", "7", "--out", str(inst_path)]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": str(inst_path), "T": 5, "adversary": {"kind": "cycle"}, "output_dir": str(tmp_path / "out")}))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "summary.json").exists()


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.main(["accept", "--suite", "vibes"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": "tiny", "T": 0}))
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_cli_numerical_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalFailure("synthetic")

    monkeypatch.setattr(harness, "run_ogd", boom)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": "tiny", "T": 2, "output_dir": str(tmp_path / "o")}))
    assert cli.main(["run", "--config", str(cfg)]) == 3


def test_cli_accept_reports(tmp_path, capsys):
    out = tmp_path / "rep.json"
    assert cli.main(["accept", "--suite", "submodularity", "--seed", "2", "--json", str(out)]) == 0
    assert "[PASS] criterion 5" in capsys.readouterr().out
    assert json.loads(out.read_text())["passed"] is True


def test_cli_accept_failure_exit(monkeypatch):
    failing = harness.CriterionResult(5, "stub", False, 1, 1, "", 0.0)
    monkeypatch.setitem(harness.SUITES, "submodularity", lambda seed: [failing])
    assert cli.main(["accept", "--suite", "submodularity"]) == 1
