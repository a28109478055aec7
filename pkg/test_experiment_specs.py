import json

import pytest

from tools.errors import SpecError
from tools.experiment_specs import (
    ExperimentSpec,
    SweepAxis,
    build_experiment_spec,
    build_sweep_spec,
    derive_spec,
    is_sweep_document,
    load_experiment_spec,
    load_sweep_spec,
    parse_override,
)
from tools.forward_models import OperatorForm
from tools.presets import PRESETS, get_preset
from tools.settings import get_settings
from tools.st_solver import StepRule


def test_defaults_are_the_benchmark_instance():
    spec = ExperimentSpec()
    assert (spec.n, spec.m, spec.s) == (200, 80, 16)
    assert (spec.model.c, spec.model.d, spec.model.form) == (2, 3, OperatorForm.ADDITIVE)
    assert spec.model.rescale == 0.05
    assert spec.solver.lam == 4.0
    assert spec.solver.eta == 1.0
    assert spec.solver.step == StepRule(rule="fixed", size=1.0)
    assert spec.alpha == 0.125
    assert spec.noise_db == 30.0


def test_overrides_use_dotted_paths():
    spec = build_experiment_spec({}, ["solver.lambda=4.5", "model.d=4", "noise_db=none", "alpha=discrepancy"])
    assert spec.solver.lam == 4.5
    assert spec.model.d == 4
    assert spec.noise_db == "none"
    assert spec.alpha == "discrepancy"


def test_seed_override_wins_over_file():
    spec = build_experiment_spec({"seed": 3}, seed=2 ** 64 - 1)
    assert spec.seed == 2 ** 64 - 1


def test_step_accepts_number_or_rule():
    assert build_experiment_spec({"solver": {"step": 0.5}}).solver.step.size == 0.5
    spec = build_experiment_spec({}, ['solver.step={"rule": "exact_line_search", "grid_points": 32}'])
    assert spec.solver.step == StepRule(rule="exact_line_search", grid_points=32)


def test_unknown_keys_and_bad_values_are_spec_errors():
    with pytest.raises(SpecError):
        build_experiment_spec({"solver": {"lamda": 4.0}})
    with pytest.raises(SpecError):
        build_experiment_spec({}, ["solver.eta=1.5"])
    with pytest.raises(SpecError):
        build_experiment_spec({}, ["noise_db"])
    with pytest.raises(SpecError):
        build_experiment_spec({"n": 2, "m_ratio": 0.1})
    with pytest.raises(SpecError):
        build_experiment_spec({"trials": 2, "trace_trial": 2})
    with pytest.raises(SpecError):
        build_experiment_spec({"alpha": -0.1})


def test_parse_override():
    assert parse_override("solver.lambda=4.0") == ("solver.lambda", 4.0)
    assert parse_override("noise_db=none") == ("noise_db", "none")
    assert parse_override("snapshot_iters=[1, 2]") == ("snapshot_iters", [1, 2])


def test_derive_spec_keeps_base_untouched():
    base = ExperimentSpec(n=40)
    derived = derive_spec(base, {"solver.eta": 0.0}, name="copy")
    assert derived.name == "copy"
    assert derived.solver.eta == 0.0
    assert base.solver.eta == 1.0


def test_document_round_trips_through_json(tmp_path):
    spec = build_experiment_spec({"name": "tiny", "n": 40, "noise_db": "none"})
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_document()))
    assert load_experiment_spec(path) == spec
    assert "lambda" in spec.to_document()["solver"]


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(SpecError):
        load_experiment_spec(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SpecError):
        load_experiment_spec(bad)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(SpecError):
        load_experiment_spec(listed)


def test_sweep_document(tmp_path):
    document = {
        "name": "rows",
        "base": {"n": 40},
        "rows": {"key": "noise_db", "values": ["none", 30], "linked": {"alpha": [0.01, 0.1]}},
        "columns": {"key": "solver.eta", "values": [0.0, 1.0]},
    }
    assert is_sweep_document(document)
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(document))
    sweep = load_sweep_spec(path, ["trials=2"])
    assert sweep.base.trials == 2
    assert sweep.rows.overrides(1) == {"noise_db": 30, "alpha": 0.1}
    assert sweep.metric == "snr"


def test_axis_lengths_must_agree():
    with pytest.raises(ValueError):
        SweepAxis(key="noise_db", values=[10, 20], labels=["a"])
    with pytest.raises(ValueError):
        SweepAxis(key="noise_db", values=[10, 20], linked={"alpha": [0.1]})
    with pytest.raises(SpecError):
        build_sweep_spec({"name": "x", "base": {}, "columns": {"key": "solver.eta", "values": []}})


def test_presets_are_valid_sweeps():
    for name in PRESETS:
        sweep = get_preset(name)
        assert sweep.name == name
        assert sweep.base.n == 200
    noise = get_preset("noise_level")
    assert len(noise.rows) == 6 and len(noise.columns) == 6
    assert noise.rows.overrides(0) == {"noise_db": "none", "alpha": 0.015}
    assert get_preset("step_size").columns.values[-2:] == [2.0, 3.0]
    with pytest.raises(SpecError):
        get_preset("missing")


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("RECOVERY_OUTPUT_DIR", "results")
    monkeypatch.setenv("RECOVERY_JOBS", "3")
    monkeypatch.setenv("RECOVERY_LOG_LEVEL", "debug")
    settings = get_settings()
    assert settings.output_dir == "results"
    assert settings.jobs == 3
    assert settings.log_level == "DEBUG"
