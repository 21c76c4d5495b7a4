import json

import pytest

from roadfit.cli import main


@pytest.fixture(scope="module")
def scen(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen")
    assert main(["synth", "--out-dir", str(d), "--grid-size", "3", "--node-jitter", "1.0", "--width-error", "1.5",
                 "--objects", "car,barrier", "--seed", "1"]) == 0
    return d


def fit_args(d, tag, *extra):
    return ["fit", "--axes", str(d / "axes.csv"), "--observations", str(d / "observations.csv"),
            "--out-segments", str(d / f"{tag}_seg.csv"), "--report", str(d / f"{tag}_rep.json"), *extra]


def test_synth_outputs(scen):
    for name in ("axes.csv", "true_axes.csv", "true_segments.csv", "ground_truth.csv", "observations.csv"):
        assert (scen / name).stat().st_size > 0


def test_fit_report_decreasing(scen):
    assert main(fit_args(scen, "a", "--trace", str(scen / "trace.csv"), "--out-axes", str(scen / "fa.csv"))) == 0
    rep = json.loads((scen / "a_rep.json").read_text())
    h = rep["cost_history"]
    assert h[-1] < h[0] and all(b <= a for a, b in zip(h, h[1:]))
    assert (scen / "trace.csv").read_text().startswith("iter;timestamp;kind;id;wkt;residual\n")


def test_no_regularisation_lowers_median(scen, capsys):
    main(fit_args(scen, "reg"))
    main(fit_args(scen, "noreg", "--no-regularisation"))
    capsys.readouterr()
    medians = []
    for tag in ("reg", "noreg"):
        main(["eval", "--segments", str(scen / f"{tag}_seg.csv"), "--ground-truth", str(scen / "ground_truth.csv"),
              "--exclusion", str(scen / "true_segments.csv")])
        medians.append(float(capsys.readouterr().out.splitlines()[1].split()[3]))
    assert medians[1] < medians[0]


def test_match_then_fit_equals_fused(scen):
    assert main(["match", "--axes", str(scen / "axes.csv"), "--observations", str(scen / "observations.csv"),
                 "--out", str(scen / "m.csv")]) == 0
    main(fit_args(scen, "fused"))
    main(fit_args(scen, "staged", "--matches", str(scen / "m.csv")))
    assert (scen / "fused_seg.csv").read_bytes() == (scen / "staged_seg.csv").read_bytes()


def test_regroup(scen):
    main(fit_args(scen, "rg"))
    assert main(["regroup", "--segments", str(scen / "rg_seg.csv"), "--out", str(scen / "reg.csv"),
                 "--topology-out", str(scen / "topo.csv")]) == 0
    assert (scen / "reg.csv").read_text().startswith("axis_id;wkt;width;part;segments\n")


def test_bad_config_key_exit_2(scen, capsys):
    assert main(fit_args(scen, "bad", "--set", "weights.bogus=1")) == 2
    assert "unknown config key" in capsys.readouterr().err
    cfg = scen / "bad.ini"
    cfg.write_text("[solver]\nspeed = 3\n")
    assert main(["config", "--config", str(cfg)]) == 2


def test_usage_error_exit_2():
    assert main(["fit"]) == 2
    assert main(["nonsense"]) == 2


def test_missing_file_exit_1(tmp_path):
    assert main(["eval", "--segments", str(tmp_path / "nope.csv"), "--ground-truth", str(tmp_path / "x.csv")]) == 1


def test_config_dump(capsys):
    assert main(["config", "--dump", "--set", "weights.kerb=2"]) == 0
    out = capsys.readouterr().out
    assert "[weights]\nkerb = 2.0" in out and "[class.barrier]" in out
