import dataclasses
import json

import numpy as np
import pytest

from qnlab.experiments import (
    CATALOG,
    INVARIANTS,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    fit_period,
    make_config,
    run_experiment,
    sweep,
    window_average,
    write_sweep,
)


def small(experiment_id, **kw):
    presets = {
        "E1_free_isometry": dict(n_particles=80, n_samples=4),
        "E3_dobrushin": dict(n_particles=40, B_list=(1.0,), w1_targets=(1e-2,), n_samples=8, T_final=1.0),
    }
    return make_config(experiment_id, seed=3, **{**presets.get(experiment_id, {}), **kw})


# --- configuration ---------------------------------------------------------------


def test_config_requires_seed():
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"experiment_id": "E2_oscillation"})


def test_config_rejects_unknown_keys_and_ids():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment_id": "E2_oscillation", "seed": 1, "bogus": 2})
    with pytest.raises(ConfigError):
        make_config("E9_missing", seed=1)


@pytest.mark.parametrize("field,value", [("nx", 2), ("eta", 1.5), ("epsilons", ()), ("T_final", 0.0), ("kappa", -1.0)])
def test_config_range_checks(field, value):
    with pytest.raises(ConfigError):
        make_config("E2_oscillation", seed=1, **{field: value})


def test_config_loads_json_and_applies_experiment_defaults(tmp_path):
    path = tmp_path / "e4.json"
    path.write_text(json.dumps({"experiment_id": "E4_kinetic_loeper", "seed": 4, "T_final": 1.5}))
    cfg = ExperimentConfig.load(path)
    assert cfg.T_final == 1.5 and cfg.v_max == 2.5 and cfg.epsilons == (0.05,)
    assert ExperimentConfig.load(path, seed=9).seed == 9


def test_config_hash_ignores_output_dir():
    a = make_config("E2_oscillation", seed=1)
    assert a.hash() == dataclasses.replace(a, output_dir="elsewhere").hash()
    assert a.hash() != make_config("E2_oscillation", seed=2).hash()


# --- helpers --------------------------------------------------------------------------


def test_window_average_removes_full_periods():
    t = np.linspace(0, 4, 401)
    s = 2.0 + np.sin(2 * np.pi * t)
    avg = window_average(s, 100)
    np.testing.assert_allclose(avg, 2.0, atol=1e-12)
    with pytest.raises(ValueError):
        window_average(s[:10], 20)


def test_fit_period_recovers_sinusoid():
    t = np.linspace(0, 3, 300)
    assert fit_period(t, 0.3 * np.sin(2 * np.pi * t / 0.7 + 0.4) + 0.1) == pytest.approx(0.7, rel=1e-6)


# --- experiments ------------------------------------------------------------------------


def test_every_experiment_is_registered():
    assert len(CATALOG) == 8


def test_e1_adapted_distance_constant():
    rep = run_experiment(small("E1_free_isometry"))
    v = {x.name: x for x in rep.verdicts}
    assert v["adapted_distance_constant"].passed
    assert v["adapted_distance_constant"].measured < 1e-9
    assert rep.rows_csv().splitlines()[0] == "t,adapted_w2,standard_w2"


def test_e2_without_oscillation_gives_zero_distances():
    rep = run_experiment(make_config("E2_oscillation", seed=0, eta=0.0))
    assert rep.passed and [v.name for v in rep.verdicts] == ["distances_zero"]
    assert all(r["w1"] == 0 and r["l1"] == 0 for r in rep.rows)


def test_e3_reduced_run_has_no_violations():
    rep = run_experiment(small("E3_dobrushin"))
    assert rep.passed
    assert all(r["w1"] <= r["bound"] for r in rep.rows if "w1" in r)


def test_e8_screening():
    rep = run_experiment(make_config("E8_debye_screening", seed=0))
    assert rep.passed
    assert rep.rows_csv().splitlines()[0] == "x,epsilon,U"


def test_verdicts_reference_module_invariants():
    rep = run_experiment(make_config("E2_oscillation", seed=0))
    modules = {"phase_space", "fields", "dynamics", "transport", "harness_cli"}
    for v in rep.verdicts:
        assert v.name.split("[")[0] in INVARIANTS
        assert v.invariant.split(".")[0] in modules


def test_report_files(tmp_path):
    rep = run_experiment(make_config("E2_oscillation", seed=0))
    out = rep.write(tmp_path / "r")
    assert (out / "verdicts.csv").read_text().splitlines()[0] == "name,measured,tolerance,pass"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["provenance"]["config_hash"] == make_config("E2_oscillation", seed=0).hash()
    assert summary["verdicts"][0]["tolerance"].startswith("<=")


def test_stage_is_reported_on_module_errors():
    cfg = make_config("E5_quasineutral_vp", seed=0, v_max=0.2, epsilons=(0.1,))
    with pytest.raises(ExperimentError) as info:
        run_experiment(cfg)
    assert "simulate eps=0.1" in str(info.value)


def test_runs_are_byte_reproducible(tmp_path):
    cfg = small("E1_free_isometry")
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.rows_csv() == b.rows_csv() and a.verdicts_csv() == b.verdicts_csv()
    assert a.summary_json() == b.summary_json()


# --- sweeps ----------------------------------------------------------------------------------


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        sweep(make_config("E2_oscillation", seed=0), "eta", [0.1, 0.2])


def test_sweep_e2_over_k(tmp_path):
    res = sweep(make_config("E2_oscillation", seed=0), "k", [4, 8, 16])
    assert res.passed and res.verdicts[0].name == "sweep_trend[w1_loglog_slope]"
    out = write_sweep(res, tmp_path / "s")
    lines = (out / "trend.csv").read_text().splitlines()
    assert lines[0] == "sweep_param,metric,value"
    assert (out / "k=4" / "report.csv").exists()


def test_single_value_sweep_matches_run():
    cfg = make_config("E2_oscillation", seed=0)
    res = sweep(cfg, "k", [8])
    direct = run_experiment(dataclasses.replace(cfg, k_list=(8,)))
    assert res[0].rows_csv() == direct.rows_csv()
    assert res[0].verdicts_csv() == direct.verdicts_csv()


def test_sweep_e5_over_epsilon_is_strictly_decreasing():
    res = sweep(make_config("E5_quasineutral_vp", seed=0), "epsilon", [0.2, 0.1, 0.05])
    values = [r.metrics[f"defect_avg[eps={e!r}]"] for r, e in zip(res, [0.2, 0.1, 0.05])]
    assert values[0] > values[1] > values[2]
    assert res.verdicts[0].passed
