import json
from textwrap import dedent

import numpy as np
import pytest

from zeronoise import parse_config
from zeronoise.errors import CatalogError, ConfigError
from zeronoise.noise import DEFAULT_EPSILONS
from zeronoise.report import (eps_tag, fmt, read_csv, verify_manifest, write_csv,
                              write_manifest)

MINIMAL = dedent("""\
    [map]
    name = doubling_d
    d = 2

    [sweep]
    epsilon_list = [0.05]
    """)


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.map_name == "doubling_d" and cfg.map_parameters == {"d": 2}
    assert cfg.epsilon_list == (0.05,)
    assert cfg.seeds == (0,)
    assert cfg.solver["tol"] == 1e-10 and cfg.solver["max_iters"] == 100_000
    assert cfg.kernel["shape"] == "ball"
    assert cfg.grid_cells is None and cfg.output_dir == "out"
    assert cfg.build_map().name == "doubling_d"


def test_default_epsilon_list():
    cfg = parse_config("[map]\nname = cat\n")
    assert cfg.epsilon_list == DEFAULT_EPSILONS


def test_full_config():
    cfg = parse_config(dedent("""\
        # comments are allowed
        [map]
        name = solenoid_alpha
        alpha = 0.5
        [kernel]
        shape = cube
        policy = reject
        [grid]
        cells = [64, 16, 16]
        [solver]
        tol = 1e-9
        samples_per_cell = 8
        x0 = [0.1, 0.0, 0.0]
        [sweep]
        epsilon_list = [0.1, 0.01]
        seeds = [1, 2]
        lyapunov_steps = 0
        [output]
        directory = "results/run1"
        """))
    assert cfg.grid_cells == (64, 16, 16)
    assert cfg.kernel["shape"] == "cube" and cfg.kernel["policy"] == "reject"
    assert cfg.solver["x0"] == (0.1, 0.0, 0.0)
    assert cfg.seeds == (1, 2) and cfg.output_dir == "results/run1"
    assert cfg.sweep["lyapunov_steps"] == 0


def test_epsilon_list_must_decrease():
    with pytest.raises(ConfigError, match="epsilon_list not decreasing") as err:
        parse_config("[map]\nname = cat\n[sweep]\nepsilon_list = [0.01, 0.02]\n")
    assert err.value.line == 4
    assert str(err.value).startswith("line 4:")


def test_unknown_map_lists_catalog():
    with pytest.raises(CatalogError) as err:
        parse_config("[map]\nname = foo\n")
    assert "g_alpha" in str(err.value) and "solenoid_alpha" in str(err.value)
    assert err.value.line == 2


@pytest.mark.parametrize("text,line,words", [
    ("[map]\nname = cat\n[solver]\ntoll = 1\n", 4, "unknown key"),
    ("[map]\nname = cat\n[solver]\nmax_iters = many\n", 4, "type mismatch"),
    ("[map]\nname = cat\n[grid]\ncells = [1.5]\n", 4, "type mismatch"),
    ("[map]\nname = cat\n\n[extras]\nx = 1\n", 4, "unknown section"),
    ("[map]\nname = g_alpha\nbeta = 2\n", 3, "unknown key"),
    ("[map]\nname = cat\n[sweep]\nseeds = []\n", 4, "seeds is empty"),
    ("[map]\nname = cat\n[kernel]\nshape = sphere\n", 4, "must be one of"),
    ("[map]\nname = cat\n[sweep]\nepsilon_list = [0.1, -0.1]\n", 4, "type mismatch"),
])
def test_errors_name_their_line(text, line, words):
    with pytest.raises(ConfigError, match=words) as err:
        parse_config(text)
    assert err.value.line == line


def test_missing_map_section():
    with pytest.raises(ConfigError, match=r"\[map\]"):
        parse_config("[sweep]\nseeds = [1]\n")


def test_config_hash_tracks_text():
    a = parse_config(MINIMAL)
    b = parse_config(MINIMAL + "\n# trailing comment\n")
    assert a.config_hash != b.config_hash
    assert a.config_hash == parse_config(MINIMAL).config_hash


# CSV and manifest -------------------------------------------------------------

def test_float_format_round_trips():
    for v in (0.1, 1 / 3, np.pi * 1e-300, -2.5e17):
        assert float(fmt(v)) == v
    assert fmt(np.nan) == "nan" and fmt(True) == "true" and fmt(np.int64(3)) == "3"
    with pytest.raises(ValueError):
        fmt("a,b")


def test_csv_header_and_rows(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"), [{"a": 1, "b": 0.5}, [2, np.nan]], "abc")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["schema=1", "# manifest=manifest.json config_hash=abc", "a,b"]
    assert read_csv(path) == [{"a": "1", "b": "0.5"}, {"a": "2", "b": "nan"}]


def test_manifest_verification(tmp_path):
    cfg = parse_config(MINIMAL)
    out = write_csv(tmp_path / "r.csv", ("a",), [[1]], cfg.config_hash)
    write_manifest(tmp_path, cfg, "test", [out], {"total": 0.1})
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert {"config_hash", "seeds", "versions", "timings"} <= set(data)
    assert verify_manifest(tmp_path)
    out.write_text(out.read_text() + "tampered\n")
    assert not verify_manifest(tmp_path)


def test_eps_tag():
    assert eps_tag(0.0464159) == "0.0464159" and eps_tag(1e-3) == "0.001"
