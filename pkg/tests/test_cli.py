import pytest

from hard_edge.cli import main, parse_field, parse_grid
from hard_edge.errors import ConfigError
from hard_edge.precision import PrecisionContext
from hard_edge.utils import read_report, read_table

CTX = PrecisionContext(bits=128, target_tol=1e-20)


def run(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def test_invalid_r_is_config_error(tmp_path):
    assert run(["curve", "--r", "0", "--out", str(tmp_path)]) == 2


def test_curve_takes_single_r(tmp_path):
    assert run(["curve", "--r", "1,2", "--out", str(tmp_path)]) == 2


def test_branch_points_r1(tmp_path):
    assert run(["curve", "--r", "1", "--branch-points", "--bits", "128", "--out", str(tmp_path)]) == 0
    path = tmp_path / "curve_r1_zeta_branch_points.csv"
    assert path.read_text().startswith("# command:")
    table = read_table(path)
    assert list(table["order"]) == [1, 1]
    assert float(table["z"].iloc[1]) == pytest.approx(4.0, abs=1e-15)


def test_grid_is_one_row_per_point_and_sheet(tmp_path):
    code = run(["curve", "--r", "2", "--grid", "ray:0.01:4:6", "--bits", "128", "--out", str(tmp_path)])
    assert code == 0
    table = read_table(tmp_path / "curve_r2_zeta_grid.csv")
    assert list(table.columns) == ["z_re", "z_im", "sheet", "v_re", "v_im"]
    assert len(table) == 18
    assert list(table["sheet"].iloc[:3]) == [0, 1, 2]
    for _, block in table.groupby(["z_re", "z_im"]):
        assert block["v_re"].astype(float).sum() == pytest.approx(1.0, abs=1e-12)
        assert abs(block["v_im"].astype(float).sum()) < 1e-12
    assert float(table["v_im"].iloc[0]) > 0


def test_bad_grid_is_config_error(tmp_path):
    assert run(["curve", "--r", "2", "--grid", "spiral:1:2", "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        parse_grid("ray:2:1:5", CTX)


def test_parse_grid_circle_avoids_axis():
    points = parse_grid("circle:2:4", CTX)
    assert len(points) == 4
    assert all(abs(complex(z).imag) > 1 for z in points)


def test_parse_field():
    assert parse_field("linear").kind == "linear"
    assert parse_field("quadratic").coefficients == [0.0, 1.0, 0.05]
    assert parse_field("poly:1,0,0.1").coefficients == [0.0, 1.0, 0.0, 0.1]
    with pytest.raises(ConfigError):
        parse_field("cubic")


def test_unsupported_field_is_config_error(tmp_path):
    code = run(["universality", "--r", "2", "--alpha", "0.5", "--V", "cubic", "--out", str(tmp_path)])
    assert code == 2


def test_desk_scale_ceiling(tmp_path):
    code = run(["universality", "--r", "2", "--n", "8,128", "--out", str(tmp_path)])
    assert code == 2


def test_ledger_output_is_reproducible(tmp_path):
    argv = ["ledger", "--r", "2", "--bits", "128", "--out", str(tmp_path)]
    assert run(argv) == 0
    first = (tmp_path / "ledger_r2.json").read_bytes()
    assert run(argv) == 0
    assert (tmp_path / "ledger_r2.json").read_bytes() == first
    report = read_report(tmp_path / "ledger_r2.json")
    assert report["header"]["command"] == "ledger"
    assert report["header"]["bits"] == 128
    quantities = [e["quantity"] for e in report["entries"]]
    assert "c_q" in quantities


def test_zero_threshold_fails_verification(tmp_path):
    code = run(["verify", "--suite", "curve", "--r", "1", "--threshold", "0",
                "--bits", "128", "--out", str(tmp_path)])
    assert code == 1
    report = read_report(tmp_path / "verify_curve.json")
    assert report["passed"] is False


def test_budget_marks_timeouts(tmp_path):
    code = run(["verify", "--suite", "all", "--r", "1", "--budget", "0", "--out", str(tmp_path)])
    assert code == 1
    report = read_report(tmp_path / "verify_all.json")
    assert report["complete"] is False
    assert {s["status"] for s in report["suites"]} == {"timeout"}


def test_curve_suite_passes(tmp_path):
    assert run(["verify", "--suite", "curve", "--r", "1,2", "--out", str(tmp_path)]) == 0


@pytest.mark.slow
def test_psi_suite_passes(tmp_path):
    code = run(["verify", "--suite", "psi", "--r", "1,2", "--alpha", "0.31", "--out", str(tmp_path)])
    assert code == 0


@pytest.mark.slow
def test_kernels_suite_passes_r2(tmp_path):
    code = run(["verify", "--suite", "kernels", "--r", "2", "--alpha", "0.31", "--out", str(tmp_path)])
    assert code == 0
    checks = read_report(tmp_path / "verify_kernels.json")["suites"][0]["report"]["checks"]
    dual = next(c for c in checks if c["check"] == "dual_kernel")
    assert float(dual["residual_max"]) < 1e-8


def test_verify_report_is_byte_identical_across_runs(tmp_path):
    path = tmp_path / "verify_curve.json"
    assert run(["verify", "--suite", "curve", "--r", "1", "--bits", "128", "--out", str(tmp_path)]) == 0
    first = path.read_bytes()
    assert run(["verify", "--suite", "curve", "--r", "1", "--bits", "128", "--out", str(tmp_path)]) == 0
    assert path.read_bytes() == first
    assert "elapsed_seconds" not in read_report(path)
