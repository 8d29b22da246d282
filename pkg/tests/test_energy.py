import json

import pytest

from dwnhar.energy import (
    DEFAULT_MANIFEST, FLOPS_CAVEAT, EnergyModel, comparison_table, estimate_energy,
    load_manifest, size_table,
)


def test_energy_per_flop():
    m = EnergyModel()
    assert (m.energy_per_mul, m.energy_per_add) == (0.928, 0.594)
    assert abs(m.energy_per_flop - (0.928 + 0.594) / 2) < 1e-12
    assert abs(m.energy_per_flop - 0.761) < 1e-12


@pytest.mark.parametrize("flops,exact,table", [
    (35_000_000, 26.635, 26), (11_000_000, 8.371, 8), (44_000_000, 33.484, 33),
    (69_000_000, 52.509, 52), (0, 0.0, 0),
])
def test_table_values(flops, exact, table):
    mj = estimate_energy(flops)
    assert mj == pytest.approx(exact, abs=1e-9)
    assert abs(round(mj) - table) <= 1


def test_negative_flops():
    with pytest.raises(ValueError):
        estimate_energy(-1)


def test_manifest_defaults():
    names = [r["name"] for r in DEFAULT_MANIFEST]
    assert names == ["TSLANet", "Channel-Equalization-HAR", "CNN", "HARMamba"]
    assert [r["flops"] for r in DEFAULT_MANIFEST] == [69e6, 44e6, 35e6, 11e6]


def test_comparison_table():
    local = [{"name": "dwn", "accuracy": 0.95, "f1": 0.94, "size_bytes": 20_000}]
    text = comparison_table(DEFAULT_MANIFEST, local)
    lines = text.splitlines()
    cnn = next(l for l in lines if l.startswith("CNN"))
    assert "26.6mJ" in cnn and "35M" in cnn and "96.27%" in cnn
    dwn = next(l for l in lines if l.startswith("dwn"))
    assert "95.00%" in dwn and "19.5" in dwn
    assert text.rstrip().endswith(FLOPS_CAVEAT)
    assert "-" in next(l for l in lines if l.startswith("TSLANet")).split()


def test_size_table():
    row = {"name": "m", "layers": 1, "luts": 10_000, "arity": "4", "lut_bits": 160_000,
           "size_bytes": 20_000, "accuracy": None}
    assert "19.53" in size_table([row])


def test_load_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps([{"name": "a", "flops": 5}]))
    assert load_manifest(p) == [{"name": "a", "flops": 5}]
    p.write_text(json.dumps([{"name": "a"}]))
    with pytest.raises(ValueError, match="row 0"):
        load_manifest(p)
