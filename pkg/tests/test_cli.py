import csv
import json
import math
import subprocess
import sys
import xml.etree.ElementTree as ET
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from bec3.cli import main
from bec3.cli.config import load_config
from bec3.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def schema(name):
    text = resources.files("bec3.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SQUARE_WELL = """command = "scatter"
[potential]
dimension = 3
family = "square_well"
v0 = {v0}
radius = 1.0
"""


def test_minimal_config_loads(tmp_path):
    cfg = load_config(write(tmp_path, SQUARE_WELL.format(v0=2.0)))
    assert cfg.command == "scatter" and cfg.potential.v0 == 2.0


def test_negative_height_names_v0(tmp_path):
    with pytest.raises(ConfigError, match="v0") as info:
        load_config(write(tmp_path, SQUARE_WELL.format(v0=-1.0)))
    assert info.value.location == "potential.v0"


def test_unknown_key_rejected(tmp_path):
    text = SQUARE_WELL.format(v0=1.0) + "alpha_typo = 3\n"
    with pytest.raises(ConfigError, match="alpha_typo") as info:
        load_config(write(tmp_path, text))
    assert info.value.location == "potential.alpha_typo"


def test_parse_error_has_line_and_column(tmp_path):
    path = write(tmp_path, 'command = "scatter"\n[potential\n')
    with pytest.raises(ConfigError, match=r"line 2, column \d+") as info:
        load_config(path)
    assert info.value.location.startswith(f"{path}:2:")


def test_missing_block_rejected(tmp_path):
    with pytest.raises(ConfigError, match="problem"):
        load_config(write(tmp_path, 'command = "gp"\n'))


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["scatter", "--config", str(write(tmp_path, SQUARE_WELL.format(v0=-1.0))), "--out", str(out)])
    assert rc == 2
    record = json.loads(capsys.readouterr().err)
    jsonschema.validate(record, schema("error"))
    assert record["exit_code"] == 2 and record["location"] == "potential.v0"
    assert json.loads((out / "error.json").read_text()) == record


def test_solver_error_exit_code(tmp_path, capsys):
    text = """command = "scatter"
[potential]
dimension = 6
family = "gaussian"
construction = "isotropic_after_M"
amplitude = 1.0
width = 0.4
cutoff = 2.5
[scatter]
method = "direct"
points = 16
memory_cap_gib = 0.0001
"""
    rc = main(["scatter", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o")])
    assert rc == 1
    record = json.loads(capsys.readouterr().err)
    jsonschema.validate(record, schema("error"))
    assert record["error"] == "MemoryCapError"


def test_non_verify_needs_config(capsys):
    assert main(["gp"]) == 2


def test_scatter_square_well_csv(tmp_path):
    out = tmp_path / "sc"
    assert main(["scatter", "--config", str(CONFIGS / "scatter_square_well.toml"), "--out", str(out)]) == 0
    rows = read_csv(out / "scatter.csv")
    exact = 8 * math.pi * (1 - math.tanh(1.0))
    assert abs(float(rows[0]["b"]) / exact - 1) <= 1e-3
    record = json.loads((out / "scatter.json").read_text())
    jsonschema.validate(record, schema("scatter"))
    prof = read_csv(out / "profile_0.csv")
    assert list(prof[0]) == ["r", "f"] and all(0 <= float(p["f"]) <= 1 + 1e-12 for p in prof)


def test_gp_torus_json(tmp_path):
    out = tmp_path / "gp"
    assert main(["gp", "--config", str(CONFIGS / "gp_torus.toml"), "--out", str(out)]) == 0
    record = json.loads((out / "gp.json").read_text())
    jsonschema.validate(record, schema("gp"))
    assert abs(record["energy"] - 3.0 / 6) <= 1e-8
    header = json.loads((out / "field.bin.json").read_text())
    jsonschema.validate(header, schema("field_header"))
    assert (out / "field.bin").stat().st_size == 8 * 32**3
    trace = read_csv(out / "trace.csv")
    assert list(trace[0]) == ["iteration", "energy", "residual"]
    float(trace[-1]["energy"])


def test_bogoliubov_and_expand(tmp_path):
    out = tmp_path / "bg"
    assert main(["bogoliubov", "--config", str(CONFIGS / "bogoliubov_torus.toml"), "--out", str(out)]) == 0
    jsonschema.validate(json.loads((out / "bogoliubov.json").read_text()), schema("bogoliubov"))
    rows = read_csv(out / "spectrum.csv")
    p2 = 4 * math.pi**2
    assert float(rows[0]["eigenvalue"]) == pytest.approx(math.sqrt(p2 * (p2 + 5.0)), rel=1e-8)
    out = tmp_path / "ex"
    assert main(["expand", "--config", str(CONFIGS / "expand.toml"), "--out", str(out)]) == 0
    jsonschema.validate(json.loads((out / "expand.json").read_text()), schema("expand"))
    rows = read_csv(out / "expand.csv")
    assert len(rows) == 41
    for r in rows:
        for k, v in r.items():
            if v not in ("true", "false"):
                float(v)


def test_verify_report_and_schema(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out), "--seed", "0"]) == 0
    record = json.loads((out / "verify.json").read_text())
    jsonschema.validate(record, schema("verify"))
    assert record["passed"] and len(record["checks"]) >= 10
    assert all("measured" in c for c in record["checks"])


def test_determinism_and_svg_structure(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "expand.toml")
    assert main(["expand", "--config", cfg, "--out", str(a)]) == 0
    assert main(["expand", "--config", cfg, "--out", str(b)]) == 0
    for name in ("expand.csv", "expand.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ta, tb = ET.parse(a / "expand.svg").getroot(), ET.parse(b / "expand.svg").getroot()
    assert ta.tag.endswith("svg")
    assert [e.tag for e in ta.iter()] == [e.tag for e in tb.iter()]


def test_csv_uses_crlf(tmp_path):
    out = tmp_path / "ex"
    main(["expand", "--config", str(CONFIGS / "expand.toml"), "--out", str(out)])
    assert (out / "expand.csv").read_bytes().split(b"\n")[0].endswith(b"\r")


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "bec3.cli", "expand", "--config", str(CONFIGS / "expand.toml"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "expand.csv").exists()
