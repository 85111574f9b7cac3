import filecmp
import os
from pathlib import Path

import numpy as np
import pytest

from derreg import fleet as fl
from derreg.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from derreg.scenario import DATA_DIR, ConfigError, emit_plot_data, load_scenario, run_scenario
from derreg.signal import SignalTrace, read_trace, write_trace

SMALL = """\
[scenario]
name = small
fleet = fleet.csv
regd = bundled:regd.csv
beta = 0.5
seed = 3

[solver]
algorithm = all
budget = 40
topology = ring

[fleet]
stage = {stage}
stage1 = V1G

[measure]
filtered = V1G
"""


def small_fleet(identity=False):
    r = fl.ResponseModel() if identity else fl.ResponseModel(pure_delay=4, settle_time=2.0)
    return fl.Fleet([
        fl.DeviceSpec("V1G", 3.3, 60, 0, r, node=0),
        fl.DeviceSpec("V1G", 3.3, 60, 30, r, node=0),
        fl.DeviceSpec("V2G", 5.0, 1, 0, r, node=1),
        fl.DeviceSpec("V2G", 5.0, 1, 0, r, node=2),
        fl.DeviceSpec("BESS", 3.0, 20, 0, fl.ResponseModel(), node=3),
    ])


def make_scenario(tmp_path, stage="single", identity=False, body=None):
    fl.write_fleet(small_fleet(identity), tmp_path / "fleet.csv")
    path = tmp_path / "small.scenario"
    path.write_text(body if body is not None else SMALL.format(stage=stage))
    return path


# --- config loading -----------------------------------------------------------

def test_bundled_scenarios_load():
    for k in range(3):
        sc = load_scenario(DATA_DIR / f"test{k}.scenario")
        assert sc.beta == 0.75 and sc.fleet_path.exists()
    assert load_scenario(DATA_DIR / "test2.scenario").stage == "two"


@pytest.mark.parametrize("edit,line,needle", [
    (("beta = 0.5", "beta = 1.5"), 5, "beta"),
    (("budget = 40", "budget = lots"), 10, "budget"),
    (("stage = single", "stage = three"), 14, "stage"),
    (("topology = ring", "topology = ring\ninformed = x"), 12, "informed"),
    (("fleet = fleet.csv", "fleet = missing.csv"), 3, "not found"),
])
def test_config_errors_carry_line_numbers(tmp_path, edit, line, needle):
    body = SMALL.format(stage="single").replace(*edit)
    path = make_scenario(tmp_path, body=body)
    with pytest.raises(ConfigError) as info:
        load_scenario(path)
    assert f"small.scenario:{line}" in str(info.value)
    assert needle in str(info.value)


def test_cost_errors(tmp_path):
    body = SMALL.format(stage="single") + "\n[costs]\nV2G = 1.0\n"
    with pytest.raises(ConfigError, match=r"small\.scenario:21"):
        load_scenario(make_scenario(tmp_path, body=body))
    body = SMALL.format(stage="single") + "\n[costs]\nPV = 1.0, 0\n"
    with pytest.raises(ConfigError, match="unknown DER type"):
        load_scenario(make_scenario(tmp_path, body=body))


def test_missing_section(tmp_path):
    with pytest.raises(ConfigError, match="scenario"):
        load_scenario(make_scenario(tmp_path, body="[solver]\nbudget = 3\n"))


# --- running ------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    return run_scenario(load_scenario(make_scenario(d)))


def test_run_shapes(small_run):
    assert small_run.commanded.shape == (2401, 5)
    assert len(small_run.total_measured) == 2401
    assert set(small_run.report.normalized_mse) == {"rc", "pd", "dana"}


def test_rc_column_exactly_zero(tmp_path):
    run = run_scenario(load_scenario(make_scenario(tmp_path)), solver="rc")
    assert set(run.report.normalized_mse) == {"rc"}
    for v in run.report.normalized_mse["rc"].values():
        assert v <= 1e-12


def test_two_stage_runs(tmp_path):
    run = run_scenario(load_scenario(make_scenario(tmp_path, "two")))
    assert len(run.schedules) == 2
    v1g = run.fleet.mask(["V1G"])
    assert np.all(run.schedules[1].commanded[:, v1g] == 0)


def test_two_stage_needs_two_groups(tmp_path):
    body = SMALL.format(stage="two").replace("stage1 = V1G", "stage1 = AHU")
    with pytest.raises(ConfigError):
        run_scenario(load_scenario(make_scenario(tmp_path, body=body)))


def test_identity_response_curves_overlap(tmp_path):
    body = SMALL.format(stage="single").replace("filtered = V1G", "filtered =")
    run = run_scenario(load_scenario(make_scenario(tmp_path, identity=True, body=body)))
    files = emit_plot_data(run, tmp_path / "plot")
    for f in files:
        if f.stem == "total":
            continue
        data = np.genfromtxt(f, delimiter=",", names=True)
        np.testing.assert_allclose(data["measured"], data["target"], atol=1e-12)


def test_plot_data_needs_a_run():
    with pytest.raises(ValueError):
        emit_plot_data(None, "unused")


# --- command line -------------------------------------------------------------

def test_cli_outputs_and_rows(tmp_path, capsys):
    path = make_scenario(tmp_path)
    assert main(["--scenario", str(path), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert "performance score" in capsys.readouterr().out
    out = tmp_path / "out"
    for sub in ("commanded", "measured", "groups", "plot"):
        assert (out / sub).is_dir()
    traces = [p for p in out.rglob("*.csv") if p.parent.name in ("commanded", "measured", "groups", "plot")]
    traces += [out / n for n in ("target.csv", "scheduled_target.csv", "total_commanded.csv", "total_measured.csv")]
    assert len(traces) == 2 * 5 + 2 * 3 + 4 + 4
    for p in traces:
        assert len(p.read_text().splitlines()) == 2402, p
    tracking = (out / "tracking.csv").read_text().splitlines()
    assert tracking[0] == "der_type,rmse,delay_s" and tracking[-1].startswith("total,")


def test_cli_is_deterministic(tmp_path):
    path = make_scenario(tmp_path)
    for name in ("a", "b"):
        assert main(["--scenario", str(path), "--out", str(tmp_path / name), "--seed", "7"]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    stack = [cmp]
    while stack:
        c = stack.pop()
        assert not c.left_only and not c.right_only
        _, mismatch, errors = filecmp.cmpfiles(c.left, c.right, c.common_files, shallow=False)
        assert not mismatch and not errors
        stack.extend(c.subdirs.values())


def test_cli_seed_changes_noise(tmp_path):
    path = make_scenario(tmp_path)
    body = SMALL.format(stage="single")
    fl.write_fleet(fl.Fleet([
        fl.DeviceSpec("V1G", 3.3, 60, 0, fl.ResponseModel(spike_rate=0.01), node=0),
        fl.DeviceSpec("V2G", 5.0, 1, 0, node=1),
        fl.DeviceSpec("V2G", 5.0, 1, 0, node=2),
        fl.DeviceSpec("BESS", 3.0, 20, 0, node=3),
    ]), tmp_path / "fleet.csv")
    path.write_text(body)
    main(["--scenario", str(path), "--out", str(tmp_path / "s1"), "--seed", "1", "--solver", "rc"])
    main(["--scenario", str(path), "--out", str(tmp_path / "s2"), "--seed", "2", "--solver", "rc"])
    a = read_trace(tmp_path / "s1" / "measured" / "V1G00.csv").values
    b = read_trace(tmp_path / "s2" / "measured" / "V1G00.csv").values
    assert not np.array_equal(a, b)


def test_cli_config_error_exit(tmp_path, capsys):
    path = make_scenario(tmp_path, body=SMALL.format(stage="single").replace("beta = 0.5", "beta = 2"))
    assert main(["--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "small.scenario:5" in capsys.readouterr().err


def test_cli_infeasible_exit(tmp_path):
    path = make_scenario(tmp_path)
    write_trace(SignalTrace(np.ones(1201), 2.0), tmp_path / "flat.csv")
    text = path.read_text().replace("bundled:regd.csv", "flat.csv").replace("beta = 0.5", "beta = 0.9")
    path.write_text(text)
    assert main(["--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_INFEASIBLE


def test_cli_io_errors(tmp_path):
    assert main(["--scenario", str(tmp_path / "nope.scenario")]) == EXIT_IO
    path = make_scenario(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["--scenario", str(path), "--out", str(blocker / "sub")]) == EXIT_IO


def test_cli_rejects_bad_flags(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["--scenario", "x", "--solver", "admm"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["--scenario", "x", "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["--scenario", "x", "--budget", "0"])


def test_cli_flag_overrides(tmp_path):
    path = make_scenario(tmp_path)
    assert main(["--scenario", str(path), "--out", str(tmp_path / "o"), "--solver", "pd",
                 "--stage", "two", "--budget", "20"]) == 0
    header = (tmp_path / "o" / "normalized_mse.csv").read_text().splitlines()[0]
    assert header == "der_type,pd"
