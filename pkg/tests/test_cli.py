import subprocess
import sys
from pathlib import Path

import pytest

from vlasov_dgm.cli import main
from vlasov_dgm.experiments import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def report(text):
    return dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_KURAMOTO = """\
model.name = kuramoto
model.omega_amp = 1.0
dgm.names = ring
m = 4
n = 4
T = 0.2
dt = 0.01
output.stride = 5
"""


# -- configuration parsing ------------------------------------------------------

def test_parse_defaults():
    cfg = parse_config("model.name = sis\ndgm.names = tent\nm = 4\n")
    assert (cfg.m, cfg.n, cfg.T) == (4, 16, 1.0)
    assert cfg.dt == pytest.approx(1e-3)
    assert cfg.space_kind == "interval"


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_config("model.name = sis\ndgm.names = tent\nm = 4\ncolour = red\n")
    assert info.value.field == "colour"


def test_partition_size_is_required():
    with pytest.raises(ConfigError) as info:
        parse_config("model.name = sis\ndgm.names = tent\n")
    assert info.value.field == "m"


def test_dt_override():
    cfg = parse_config(SMALL_KURAMOTO, dt_override=0.005)
    assert cfg.dt == 0.005


# -- exit codes ---------------------------------------------------------------------

def test_simulate_kuramoto_no_violation(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", write_cfg(tmp_path, SMALL_KURAMOTO),
                        "--out", tmp_path / "o", "--assert"], capsys)
    assert code == 0
    rep = report(out)
    assert float(rep["max_violation"]) == 0.0
    assert float(rep["mass_drift"]) <= 1e-14
    rows = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    # times 0, 0.05, ..., 0.2 with 4 x 4 particles each
    assert len(rows) == 1 + 5 * 16
    assert (tmp_path / "o" / "summary.txt").read_text() == out


def test_simulate_sis_conserves_population(capsys):
    code, out, _ = run(["simulate", "--config", CONFIGS / "sis.cfg", "--assert", "--dt", "0.01"], capsys)
    assert code == 0
    assert float(report(out)["conserved_drift"]) <= 1e-12


@pytest.mark.parametrize("line, field", [
    ("m = 0", "m"),
    ("n = -2", "n"),
    ("T = abc", "T"),
    ("dt = 0.3", "dt"),
    ("model.name = ising", "model.name"),
])
def test_config_errors_exit_two_and_name_the_field(tmp_path, capsys, line, field):
    key = line.split(" = ")[0]
    text = "\n".join(ln for ln in SMALL_KURAMOTO.splitlines() if not ln.startswith(key + " ")) + "\n" + line + "\n"
    code, _, err = run(["simulate", "--config", write_cfg(tmp_path, text)], capsys)
    assert code == 2
    assert field in err


def test_missing_config_file_exits_two(tmp_path, capsys):
    code, _, err = run(["simulate", "--config", tmp_path / "absent.cfg"], capsys)
    assert code == 2
    assert "config error" in err


def test_parameter_error_exits_two(tmp_path, capsys):
    text = "model.name = sis\nmodel.N = -1\ndgm.names = tent\nm = 2\nn = 2\nT = 0.1\ndt = 0.1\n"
    code, _, err = run(["simulate", "--config", write_cfg(tmp_path, text)], capsys)
    assert code == 2
    assert "N > 0" in err


def test_invariance_failure_exits_one(tmp_path, capsys):
    # unchecked parameters with a box that is not invariant; the prey leave through u = Lambda1
    text = ("model.name = lotka_volterra\nmodel.check = false\nmodel.Lambda1 = 0.5\nmodel.Lambda2 = 1.0\n"
            "dgm.names = tent, tent\nm = 2\nn = 2\nT = 2\ndt = 0.01\n"
            "initial.kind = dirac\ninitial.point = 0.45, 0.1\n")
    code, _, err = run(["simulate", "--config", write_cfg(tmp_path, text)], capsys)
    assert code == 1
    assert "invariance" in err


# -- converge ------------------------------------------------------------------------

def test_converge_rows(tmp_path, capsys):
    text = SMALL_KURAMOTO + "sweep.n = 2, 4, 8\nsweep.reference = 32\nsweep.times = 0.1, 0.2\n"
    code, out, _ = run(["converge", "--config", write_cfg(tmp_path, text), "--assert",
                        "--out", tmp_path / "o"], capsys)
    assert code == 0
    rows = (tmp_path / "o" / "distance.csv").read_text().splitlines()
    assert rows[0] == "t,m,n,d_infinity"
    assert [tuple(r.split(",")[:3]) for r in rows[1:]] == [
        ("0.10000000000000001", "4", "2"), ("0.10000000000000001", "4", "4"),
        ("0.10000000000000001", "4", "8"), ("0.20000000000000001", "4", "2"),
        ("0.20000000000000001", "4", "4"), ("0.20000000000000001", "4", "8")]
    assert out.count("nonincreasing: PASS") == 2


def test_converge_single_sweep_value_has_no_trend(tmp_path, capsys):
    text = SMALL_KURAMOTO + "sweep.n = 4\nsweep.reference = 16\n"
    code, out, _ = run(["converge", "--config", write_cfg(tmp_path, text), "--assert"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 1
    assert "nonincreasing" not in out


def test_converge_needs_sweep(tmp_path, capsys):
    code, _, err = run(["converge", "--config", write_cfg(tmp_path, SMALL_KURAMOTO)], capsys)
    assert code == 2
    assert "sweep.n" in err


# -- audit ----------------------------------------------------------------------------

def test_audit_seirs_passes(capsys):
    code, out, _ = run(["audit", "--config", CONFIGS / "seirs.cfg", "--assert"], capsys)
    assert code == 0
    assert "bony: seirs" in out and "-> PASS" in out
    assert out.rstrip().endswith("status = PASS")


def test_audit_ring_modulus(tmp_path, capsys):
    code, out, _ = run(["audit", "--config", write_cfg(tmp_path, SMALL_KURAMOTO), "--assert"], capsys)
    assert code == 0
    assert "continuity ring (grid 32)" in out and "PASS" in out
    assert "no boundary, check skipped" in out


def test_audit_lv_negative_control_fails(capsys):
    code, out, _ = run(["audit", "--config", CONFIGS / "lv_negative.cfg", "--assert"], capsys)
    assert code == 1
    assert "Lambda1 >= alpha/beta" in out
    assert "bony: lotka_volterra" in out and "-> FAIL" in out
    # without --assert the report is still printed and the exit code is 0
    assert run(["audit", "--config", CONFIGS / "lv_negative.cfg"], capsys)[0] == 0


# -- distance ----------------------------------------------------------------------------

def test_distance_two_diracs(tmp_path, capsys):
    a = write_cfg(tmp_path, "1,1,1\n1,0\n", "a.csv")
    b = write_cfg(tmp_path, "1,1,1\n1,1\n", "b.csv")
    code, out, _ = run(["distance", a, b], capsys)
    assert code == 0
    rep = report(out)
    assert float(rep["d_BL"]) == pytest.approx(2 / 3, abs=1e-9)
    assert float(rep["d_KR"]) == pytest.approx(1.0, abs=1e-9)
    assert float(rep["d_TV"]) == 1.0


def test_distance_on_the_circle(tmp_path, capsys):
    a = write_cfg(tmp_path, "1,1,1\n1,0.1\n", "a.csv")
    b = write_cfg(tmp_path, "1,1,1\n1,0.9\n", "b.csv")
    code, out, _ = run(["distance", a, b, "--metric", "circle"], capsys)
    assert code == 0
    assert float(report(out)["d_KR"]) == pytest.approx(0.2, abs=1e-9)


def test_distance_bad_file(tmp_path, capsys):
    a = write_cfg(tmp_path, "1,2,1\n1,0\n", "a.csv")
    code, _, err = run(["distance", a, a], capsys)
    assert code == 2
    assert "atoms" in err


# -- determinism and entry point ----------------------------------------------------------

def test_outputs_are_byte_identical(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_KURAMOTO)
    for d in ("a", "b"):
        assert run(["simulate", "--config", cfg, "--out", tmp_path / d], capsys)[0] == 0
    for name in ("trajectory.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_KURAMOTO)
    proc = subprocess.run([sys.executable, "-m", "vlasov_dgm", "simulate", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "model = kuramoto" in proc.stdout
