import subprocess
import sys
from pathlib import Path
from textwrap import dedent

import numpy as np
import pytest

from zeronoise import parse_config
from zeronoise.cli import SUBCOMMANDS, main, run_subcommand
from zeronoise.report import read_csv, verify_manifest

SMALL = {
    "doubling": """\
        [map]
        name = doubling_d
        [grid]
        cells = [256]
        [solver]
        n_steps = 10000
        n_samples = 1000
        n_init = 10
        n_iter = 2000
        orbit_steps = 50
        [sweep]
        epsilon_list = [0.1, 0.05]
        seeds = [0, 1]
        lyapunov_steps = 10000
        """,
}


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(dedent(text))
    return path


def run(tmp_path, sub, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / sub
    code = main([sub, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_domination_on_cat(tmp_path):
    code, out = run(tmp_path, "domination", "[map]\nname = cat\n[solver]\nn_samples = 5000\n")
    assert code == 0
    row = read_csv(out / "domination.csv")[0]
    assert float(row["lambda0_estimate"]) == pytest.approx(0.1459, abs=1e-4)
    assert row["violations"] == "0"


def test_lyapunov_on_doubling(tmp_path):
    code, out = run(tmp_path, "lyapunov", """\
        [map]
        name = doubling_d
        [kernel]
        epsilon = 0.05
        [solver]
        n_steps = 200000
        """)
    assert code == 0
    row = read_csv(out / "lyapunov.csv")[0]
    assert float(row["lambda_1"]) == pytest.approx(0.6931, abs=1e-3)


def test_stationary_on_doubling(tmp_path):
    code, out = run(tmp_path, "stationary", """\
        [map]
        name = doubling_d
        [grid]
        cells = [4096]
        [sweep]
        epsilon_list = [0.05]
        """)
    assert code == 0
    row = read_csv(out / "stationary.csv")[0]
    assert float(row["L1_to_uniform"]) < 5e-3
    assert (out / "measure_eps_0.05.csv").exists()


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_every_output_carries_the_manifest_header(tmp_path, sub):
    code, out = run(tmp_path, sub, SMALL["doubling"])
    assert code == 0
    cfg = parse_config((tmp_path / "run.ini").read_text())
    csvs = sorted(out.glob("*.csv"))
    assert csvs
    for path in csvs:
        head = path.read_text().splitlines()[:2]
        assert head == ["schema=1", f"# manifest=manifest.json config_hash={cfg.config_hash}"]
    assert verify_manifest(out)


def test_one_row_per_epsilon_and_seed(tmp_path):
    code, out = run(tmp_path, "sweep", SMALL["doubling"])
    rows = read_csv(out / "sweep.csv")
    assert [(r["epsilon"], r["seed"]) for r in rows] == [
        ("0.10000000000000001", "0"), ("0.10000000000000001", "1"),
        ("0.050000000000000003", "0"), ("0.050000000000000003", "1")]
    assert all(float(r["W1_to_reference"]) >= 0 for r in rows)
    assert (out / "measure_eps_0.05_seed_1.csv").exists()


def test_failed_row_is_isolated(tmp_path):
    base = """\
        [map]
        name = solenoid_alpha
        [grid]
        cells = [16, 8, 8]
        [solver]
        samples_per_cell = 4
        [sweep]
        lyapunov_steps = 0
        epsilon_list = {eps}
        """
    code, out = run(tmp_path, "sweep", base.format(eps="[0.5, 0.1]"))
    assert code == 1
    rows = read_csv(out / "sweep.csv")
    assert rows[0]["status"] == "ConstructionError" and rows[1]["status"] == "ok"
    alone = tmp_path / "alone"
    assert main(["sweep", "--config", str(write(tmp_path, base.format(eps="[0.1]"), "b.ini")),
                 "--out", str(alone)]) == 0
    single = read_csv(alone / "sweep.csv")[0]
    assert single["W1_to_reference"] == rows[1]["W1_to_reference"]
    assert single["entropy_rhs"] == rows[1]["entropy_rhs"]
    body = lambda path: path.read_text().splitlines()[2:]   # headers differ by config hash
    assert body(alone / "measure_eps_0.1.csv") == body(out / "measure_eps_0.1.csv")


def test_config_error_exit_code(tmp_path, caplog):
    cfg = write(tmp_path, "[map]\nname = cat\n[sweep]\nepsilon_list = [0.01, 0.02]\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 4: epsilon_list not decreasing" in caplog.text


def test_missing_config_file(tmp_path):
    assert main(["orbit", "--config", str(tmp_path / "none.ini")]) == 2


def test_unknown_subcommand_rejected():
    with pytest.raises(ValueError):
        run_subcommand("plot", parse_config("[map]\nname = cat\n"))


def test_orbit_files(tmp_path):
    code, out = run(tmp_path, "orbit", SMALL["doubling"])
    rows = read_csv(out / "orbits.csv")
    assert len(rows) == 4
    table = np.loadtxt(out / rows[0]["file"], delimiter=",", skiprows=3)
    assert table.shape == (51, 3)


def test_degenerate_sets_subcommand(tmp_path):
    code, out = run(tmp_path, "degenerate-sets", """\
        [map]
        name = g_alpha
        alpha = 0.5
        [grid]
        cells = [4096]
        """)
    rows = read_csv(out / "degenerate_sets.csv")
    assert [(r["set"], r["cell_index"]) for r in rows] == [("F1", "0")]


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "[map]\nname = cat\n[solver]\nn_samples = 100\n")
    proc = subprocess.run([sys.executable, "-m", "zeronoise.cli", "domination", "--config",
                           str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == ""
    assert "wrote" in proc.stderr
    assert Path(tmp_path / "o" / "domination.csv").exists()
