import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from geodesic_lab.cli import main
from geodesic_lab.config import LabConfig, config_hash, dump_config, load_config
from geodesic_lab.errors import ConfigError


def test_config_roundtrip(tmp_path):
    cfg = LabConfig()
    path = tmp_path / "default.cfg"
    path.write_text(dump_config(cfg))
    cfg2 = load_config(path)
    assert cfg2 == cfg
    assert config_hash(cfg2) == config_hash(cfg)


def test_config_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[construction]\nwibble = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_key_outside_section(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("delta0 = 0.2\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_exit_code(tmp_path):
    rc = main(["validate", "--config", str(tmp_path / "nope.cfg")])
    assert rc == 2


def test_bad_ordering_exit_code(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[construction]\neps1 = 0.005\neps2 = 0.02\n")
    rc = main(["validate", "--config", str(path)])
    assert rc == 1


def test_lyapunov_csv_determinism(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["lyapunov", "--map", "S", "--n-iters", "4000", "--seed", "3"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header.split(",") == [
        "map", "band", "iter_count", "lambda_u", "lambda_s", "lambda_c",
        "lambda_n", "se_u", "se_s", "se_c", "se_n", "seed",
    ]
    assert (tmp_path / "a.csv.manifest.json").exists()


def test_prop51_csv_and_svg(tmp_path):
    out = tmp_path / "p.csv"
    svg = tmp_path / "p.svg"
    rc = main([
        "prop51", "--alphas", "0.0,0.05", "--n-samples", "2000",
        "--seed", "4", "--out", str(out), "--svg", str(svg),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "alpha,L,stderr,excluded_fraction"
    row0 = lines[1].split(",")
    assert float(row0[0]) == 0.0
    # the zero-strength row is the flow rate exactly
    from geodesic_lab.config import LabConfig

    assert abs(float(row0[1]) - LabConfig().delta) < 1e-12
    tree = ET.parse(svg)
    polylines = [e for e in tree.iter() if e.tag.endswith("polyline")]
    assert len(polylines) == 1


def test_drift_csv(tmp_path):
    out = tmp_path / "d.csv"
    rc = main(["drift", "--z0", "0.5", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "z0,z1,z2,z3,z4,z5,bound_rhs,legs_ok"
    vals = lines[1].split(",")
    assert float(vals[5]) < 0.5
    assert vals[7] == "1"


def test_holonomy_csv(tmp_path):
    out = tmp_path / "h.csv"
    rc = main(["holonomy", "--k-grid", "2,4", "--covering-samples", "60",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k,displacement,covering_distance,orbit_length"
    d2 = abs(float(lines[1].split(",")[1]))
    d4 = abs(float(lines[2].split(",")[1]))
    assert d2 > d4 > 0
