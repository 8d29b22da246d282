"""FLOP-based energy estimate and comparison tables."""

from __future__ import annotations

import json
from dataclasses import dataclass

# per-operation FP32 energy on the XC7Z020 FPGA, nanojoules
ENERGY_PER_MUL_NJ = 0.928
ENERGY_PER_ADD_NJ = 0.594


@dataclass(frozen=True)
class EnergyModel:
    energy_per_mul: float = ENERGY_PER_MUL_NJ
    energy_per_add: float = ENERGY_PER_ADD_NJ

    @property
    def energy_per_flop(self) -> float:
        """Mean of one multiply and one add, in nJ (0.761 with the defaults)."""
        return (self.energy_per_mul + self.energy_per_add) / 2


def estimate_energy(flops: int, model: EnergyModel = EnergyModel()) -> float:
    """Energy per inference in millijoules."""
    if flops < 0:
        raise ValueError("flop count must be non-negative")
    return flops * model.energy_per_flop * 1e-6


# Published comparison rows on UCI-HAR: accuracy %, F1 %, model size KiB, FLOPs.
# None marks a value the source did not report.
DEFAULT_MANIFEST = [
    {"name": "TSLANet", "accuracy": 96.06, "f1": None, "size_kib": None, "flops": 69_000_000},
    {"name": "Channel-Equalization-HAR", "accuracy": 97.35, "f1": 97.12, "size_kib": 1600,
     "flops": 44_000_000},
    {"name": "CNN", "accuracy": 96.27, "f1": 96.27, "size_kib": 5100, "flops": 35_000_000},
    {"name": "HARMamba", "accuracy": 97.65, "f1": 97.01, "size_kib": 1300, "flops": 11_000_000},
]

FLOPS_CAVEAT = (
    "Competitor FLOP counts are taken as published. It is not known whether they "
    "cover preprocessing as well as the model itself; if they do not, those rows "
    "understate energy."
)


def load_manifest(path) -> list:
    with open(path) as fh:
        rows = json.load(fh)
    if not isinstance(rows, list):
        raise ValueError(f"{path}: manifest must be a JSON list of rows")
    for i, row in enumerate(rows):
        if "name" not in row or "flops" not in row:
            raise ValueError(f"{path}: row {i} needs at least 'name' and 'flops'")
    return rows


def _fmt(v, spec="{:.2f}", suffix=""):
    return "-" if v is None else spec.format(v) + suffix


def _flops(n: int) -> str:
    if n == 0:
        return "0"
    return f"{n / 1e6:g}M"


def comparison_table(manifest: list, local: list) -> str:
    """Accuracy/F1/size/FLOPs/energy table: published rows, then local DWN rows.

    ``local`` rows carry ``name``, ``accuracy``, ``f1`` (fractions or None),
    and ``size_bytes``.
    """
    header = ("Model", "Accuracy", "F1", "Size (KiB)", "FLOPs", "Energy/Sample")
    rows = []
    for r in manifest:
        e = estimate_energy(int(r["flops"]))
        rows.append((
            r["name"], _fmt(r.get("accuracy"), suffix="%"), _fmt(r.get("f1"), suffix="%"),
            _fmt(r.get("size_kib"), "{:g}"), _flops(int(r["flops"])), f"{e:.1f}mJ",
        ))
    for r in local:
        acc = None if r.get("accuracy") is None else 100 * r["accuracy"]
        f1 = None if r.get("f1") is None else 100 * r["f1"]
        rows.append((
            r["name"], _fmt(acc, suffix="%"), _fmt(f1, suffix="%"),
            f"{r['size_bytes'] / 1024:.1f}", "0", "not measured (FPGA)",
        ))
    return _render(header, rows) + "\n\n" + FLOPS_CAVEAT + "\n"


def size_table(local: list) -> str:
    header = ("Model", "Layers", "LUTs", "Arity", "LUT bits", "Size (KiB)", "Accuracy")
    rows = []
    for r in local:
        acc = "-" if r.get("accuracy") is None else f"{100 * r['accuracy']:.2f}%"
        rows.append((r["name"], str(r["layers"]), str(r["luts"]), r["arity"],
                     str(r["lut_bits"]), f"{r['size_bytes'] / 1024:.2f}", acc))
    return _render(header, rows) + "\n"


def _render(header, rows) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(header), line("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out)
