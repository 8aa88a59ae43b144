import json

import numpy as np
import pytest

from diffpos import (
    AnchorConfig,
    BuildingModel,
    ConfigError,
    ExperimentConfig,
    NoiseModel,
    build_bias_table,
    export_report,
    load_scenario,
    run_experiment,
    run_single_trial,
)
from diffpos.harness import prepare_bias_table


def small_config(**kw):
    defaults = dict(n_trials=60, seed=5, noise=NoiseModel(sigma=0.1))
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_noiseless_single_trial_nls():
    cfg = ExperimentConfig(
        n_trials=1, seed=0, noise=NoiseModel(sigma=0.0), edge_prob=1.0, estimators=("nls",)
    )
    report = run_experiment(cfg)
    assert report.results["nls"].errors_3d[0] < 1e-4


def test_failure_accounting_and_cdf_shape():
    cfg = small_config(estimators=("nls", "lls"))
    report = run_experiment(cfg)
    for res in report.results.values():
        finite = int(np.isfinite(res.errors_3d).sum())
        assert finite + res.failures == cfg.n_trials
        abscissae, fractions = res.cdf("3d")
        assert np.all(np.diff(fractions) >= 0)
        assert fractions[-1] == pytest.approx(1.0)
        assert np.all(np.diff(abscissae) >= 0)


def test_estimators_share_trial_streams():
    # identical trials regardless of which estimators run: generation draws
    # come from per-trial streams, not a shared cursor
    a = run_experiment(small_config(estimators=("nls",)))
    b = run_experiment(small_config(estimators=("lls", "nls")))
    assert np.array_equal(a.results["nls"].errors_3d, b.results["nls"].errors_3d)


def test_single_trial_reproduces_batch():
    cfg = small_config()
    report = run_experiment(cfg)
    for trial in (0, 17, 59):
        single = run_single_trial(cfg, trial)
        for name, res in report.results.items():
            assert single[name]["error_3d"] == res.errors_3d[trial]
            assert single[name]["error_z"] == res.errors_z[trial]
            assert single[name]["floor_hit"] == bool(res.floor_hits[trial])


def test_single_trial_id_validated():
    cfg = small_config()
    with pytest.raises(ConfigError):
        run_single_trial(cfg, cfg.n_trials)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(n_trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(edge_prob=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(estimators=())
    with pytest.raises(ConfigError):
        ExperimentConfig(estimators=("nls", "kalman"))
    with pytest.raises(ConfigError):
        ExperimentConfig(bias_mode="hybrid")


def test_prepare_bias_table_mode_mismatch():
    cfg = small_config(estimators=("ippa-idmean",), bias_mode="floorwise")
    table = build_bias_table(cfg.building, cfg.anchors, "composite", n_samples=500, seed=0)
    with pytest.raises(ConfigError):
        prepare_bias_table(cfg, table)


def test_prebuilt_table_matches_inline(tmp_path):
    cfg = small_config(estimators=("ippa-idmin",), bias_samples=2000)
    inline = run_experiment(cfg)
    table = build_bias_table(
        cfg.building, cfg.anchors, cfg.bias_mode, n_samples=2000, seed=cfg.seed
    )
    preloaded = run_experiment(cfg, bias_table=table)
    assert np.array_equal(
        inline.results["ippa-idmin"].errors_3d, preloaded.results["ippa-idmin"].errors_3d
    )


def test_export_report(tmp_path):
    cfg = small_config(estimators=("nls", "lls"))
    report = run_experiment(cfg)
    files = export_report(report, tmp_path / "out")
    names = {f.split("/")[-1] for f in map(str, files)}
    assert names == {
        "summary.csv", "config.json",
        "cdf_3d_nls.csv", "cdf_z_nls.csv", "cdf_3d_lls.csv", "cdf_z_lls.csv",
    }

    cdf_lines = (tmp_path / "out" / "cdf_3d_nls.csv").read_text().splitlines()
    assert len(cdf_lines) == cfg.n_trials + 1  # header + one row per sample

    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert summary[0] == "estimator,rmse_3d_m,rmse_z_m,floor_accuracy,failures,n_trials"
    for line in summary[1:]:
        name, rmse3, rmsez, facc, failures, n = line.split(",")
        res = report.results[name]
        ok = np.isfinite(res.errors_3d)
        assert float(rmse3) == pytest.approx(
            np.sqrt(np.mean(res.errors_3d[ok] ** 2)), abs=1e-9
        )
        assert int(failures) + int(ok.sum()) == int(n)

    echo = json.loads((tmp_path / "out" / "config.json").read_text())
    assert echo["n_trials"] == cfg.n_trials
    assert echo["estimators"] == ["nls", "lls"]


def test_export_is_byte_deterministic(tmp_path):
    cfg = small_config(estimators=("nls",))
    export_report(run_experiment(cfg), tmp_path / "a")
    export_report(run_experiment(cfg), tmp_path / "b")
    for name in ("summary.csv", "cdf_3d_nls.csv", "cdf_z_nls.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


SCENARIO = """\
# two floors, squat building
num_floors = 2
floor_height_m = 3.0
length_m = 12.0
breadth_m = 10.0
window_height_m = 0.8
anchor = 1.0, -4.0, 5.5
anchor = 6.0, -9.0, 1.5
anchor = 11.0, -6.0, 4.0
"""


def test_load_scenario(tmp_path):
    path = tmp_path / "scenario.txt"
    path.write_text(SCENARIO)
    building, anchors = load_scenario(path)
    assert building == BuildingModel(2, 3.0, 12.0, 10.0, 0.8)
    assert isinstance(anchors, AnchorConfig) and anchors.m == 3
    assert np.allclose(anchors.positions[1], [6.0, -9.0, 1.5])


@pytest.mark.parametrize(
    "mangle",
    [
        lambda s: s.replace("num_floors = 2\n", ""),             # missing key
        lambda s: s.replace("floor_height_m = 3.0", "floor_height_m = tall"),
        lambda s: s + "anchor = 1.0, 2.0\n",                      # bad triple
        lambda s: s + "wall_color = blue\n",                      # unknown key
        lambda s: s.replace("= 2", "2"),                          # not key = value
        lambda s: s.replace("anchor = 6.0, -9.0, 1.5\n", "").replace(
            "anchor = 11.0, -6.0, 4.0\n", ""
        ),                                                        # too few anchors
    ],
)
def test_load_scenario_errors(tmp_path, mangle):
    path = tmp_path / "scenario.txt"
    path.write_text(mangle(SCENARIO))
    with pytest.raises(ConfigError):
        load_scenario(path)
