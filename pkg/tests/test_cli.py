"""Command line interface tests.

Most tests drive ``main(argv)`` in-process; one subprocess smoke test
covers the ``python -m gridkalman`` entry point.
"""

import json
import subprocess
import sys

import pytest

from gridkalman.cli import _parse_sizes, main
from gridkalman.opcounts import DKF, closed_form_op_count
from gridkalman.testbench import read_responses, read_stimuli


NETWORK = {
    "phases": 1,
    "buses": [1, 2, 3, 4],
    "lines": [
        {"from": 1, "to": 2, "r": 0.02, "x": 0.06},
        {"from": 2, "to": 3, "r": 0.02, "x": 0.06},
        {"from": 3, "to": 4, "r": 0.02, "x": 0.06},
    ],
    "slack": {"bus": 1, "voltage": 1.0, "s_sc": 300.0, "r_over_x": 0.1},
}


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "net.json").write_text(json.dumps(NETWORK))
    scenario = {
        "network": "net.json",
        "pmu_buses": "all",
        "horizon": 5,
        "noise": {"e_rho": 1e-3, "e_phi": 1.5e-3, "q": 1e-6, "seed": 7},
    }
    (tmp_path / "scen.json").write_text(json.dumps(scenario))
    return tmp_path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestSizeParsing:
    def test_plain_list(self):
        assert _parse_sizes("4,8,16") == [4, 8, 16]

    def test_range_expansion(self):
        assert _parse_sizes("16:64:16") == [16, 32, 48, 64]

    def test_range_default_step(self):
        assert _parse_sizes("3:6") == [3, 4, 5, 6]

    def test_mixed(self):
        assert _parse_sizes("2, 4:8:2 ,32") == [2, 4, 6, 8, 32]

    def test_bad_token(self):
        from gridkalman.errors import ValidationError
        with pytest.raises(ValidationError):
            _parse_sizes("four")
        with pytest.raises(ValidationError):
            _parse_sizes("4:8:0")
        with pytest.raises(ValidationError):
            _parse_sizes("")


class TestPipeline:
    def test_full_chain(self, workspace, capsys):
        stim = workspace / "stim.csv"
        gm = workspace / "gm.csv"
        mut = workspace / "mut.csv"
        rep = workspace / "rep.csv"
        swp = workspace / "sweep.csv"

        assert run_cli("gen", "--config", workspace / "scen.json", "--out", stim) == 0
        assert run_cli("run-gm", stim, "--out", gm) == 0
        assert run_cli("run-mut", stim, "--out", mut) == 0
        assert run_cli("compare", stim, gm, mut, "--out", rep) == 0
        assert run_cli("sweep", "--sizes", "4,8,16", "--out", swp) == 0

        stimuli = read_stimuli(stim)
        assert stimuli.n_states == 8
        assert stimuli.n_measurements == 16
        assert stimuli.horizon == 5

        golden = read_responses(gm)
        candidate = read_responses(mut)
        assert golden.producer == "GM"
        assert candidate.producer == "MUT"
        assert candidate.meta["parallelism"] == 4
        assert candidate.meta["precision"] == 32

        report_text = rep.read_text()
        assert report_text.startswith("gridkalman-report,1\n")
        sweep_text = swp.read_text()
        assert sweep_text.startswith("gridkalman-sweep,1\n")
        assert sweep_text.count("\nrow,") == 3

    def test_gen_is_reproducible(self, workspace):
        a = workspace / "a.csv"
        b = workspace / "b.csv"
        run_cli("gen", "--config", workspace / "scen.json", "--out", a)
        run_cli("gen", "--config", workspace / "scen.json", "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_output(self, workspace):
        a = workspace / "a.csv"
        b = workspace / "b.csv"
        run_cli("gen", "--config", workspace / "scen.json", "--out", a)
        run_cli("gen", "--config", workspace / "scen.json", "--seed", 8, "--out", b)
        assert a.read_bytes() != b.read_bytes()

    def test_run_mut_is_reproducible(self, workspace):
        stim = workspace / "stim.csv"
        run_cli("gen", "--config", workspace / "scen.json", "--out", stim)
        a = workspace / "a.csv"
        b = workspace / "b.csv"
        run_cli("run-mut", stim, "--out", a)
        run_cli("run-mut", stim, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_run_mut_precision_flag(self, workspace):
        stim = workspace / "stim.csv"
        run_cli("gen", "--config", workspace / "scen.json", "--out", stim)
        out = workspace / "m64.csv"
        assert run_cli("run-mut", stim, "--precision", 64,
                       "--parallelism", 2, "--out", out) == 0
        responses = read_responses(out)
        assert responses.meta["precision"] == 64
        assert responses.meta["parallelism"] == 2


class TestExitCodes:
    def test_unknown_scenario_key_is_validation_error(self, workspace, capsys):
        bad = workspace / "bad.json"
        bad.write_text(json.dumps({
            "network": "net.json",
            "horizon": 5,
            "noise": {"e_rho": 1e-3, "e_phi": 1.5e-3, "q": 1e-6},
            "bogus": 1,
        }))
        assert run_cli("gen", "--config", bad, "--out", workspace / "x.csv") == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file(self, workspace, capsys):
        code = run_cli("gen", "--config", workspace / "nope.json",
                       "--out", workspace / "x.csv")
        assert code == 2

    def test_divergent_load_flow_is_exit_3(self, workspace, capsys):
        profile = workspace / "prof.csv"
        profile.write_text("injections,1\n0,4,1,-40.0,0.0\n")
        scen = workspace / "hard.json"
        scen.write_text(json.dumps({
            "network": "net.json",
            "pmu_buses": "all",
            "horizon": 3,
            "noise": {"e_rho": 1e-3, "e_phi": 1.5e-3, "q": 1e-6, "seed": 7},
            "injections": "prof.csv",
        }))
        assert run_cli("gen", "--config", scen, "--out", workspace / "x.csv") == 3
        assert "converge" in capsys.readouterr().err

    def test_malformed_stimuli_file(self, workspace, capsys):
        bogus = workspace / "bogus.csv"
        bogus.write_text("not-a-stimuli-file\n")
        assert run_cli("run-gm", bogus, "--out", workspace / "x.csv") == 2

    def test_argparse_rejects_unknown_flag(self, workspace):
        with pytest.raises(SystemExit) as err:
            run_cli("gen", "--config", workspace / "scen.json", "--frobnicate")
        assert err.value.code == 2


class TestTableA:
    def test_prints_reference_deviations(self, capsys):
        assert run_cli("table-a") == 0
        out = capsys.readouterr().out
        assert "3.333e-04" in out
        assert "5.000e-04" in out
        rows = [ln for ln in out.splitlines()
                if ln and not ln.startswith(("#", "delta_rad"))]
        assert len(rows) == 7

    def test_out_flag_writes_file(self, tmp_path, capsys):
        target = tmp_path / "table.csv"
        assert run_cli("table-a", "--out", target) == 0
        assert capsys.readouterr().out == ""
        assert "3.333e-04" in target.read_text()


class TestCounts:
    def test_sdkf_reference_row(self, capsys):
        assert run_cli("counts", "--algorithm", "sdkf",
                       "--states", "2", "--measurements", "2") == 0
        assert "sdkf,2,2,26,34,0,0" in capsys.readouterr().out

    def test_rows_match_closed_form(self, capsys):
        run_cli("counts", "--algorithm", "dkf", "--states", "3,5")
        out = capsys.readouterr().out
        for S in (3, 5):
            for D in (3, 5):
                ops = closed_form_op_count(DKF, S, D)
                assert (f"dkf,{S},{D},{ops.add_sub},{ops.mul_div},"
                        f"{ops.inversion_add},{ops.inversion_mul}") in out


def test_module_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "gridkalman", "table-a"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert result.returncode == 0
    assert "3.333e-04" in result.stdout
