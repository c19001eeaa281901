"""CSV tables with declared schemas, a units row and a provenance line."""

from __future__ import annotations

import csv
import io
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1

# name -> (columns, units)
SCHEMAS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "bcd_trace": (("round", "block", "objective", "feasible"), ("-", "-", "bit/s", "bool")),
    "learning_curve": (("iter", "agent", "reward_mean", "reward_std", "value_loss", "policy_loss"),
                       ("-", "-", "-", "-", "-", "-")),
    "woa_trace": (("iter", "best_fitness", "mean_fitness", "violations"), ("-", "-bit/s", "-bit/s", "count")),
    "route_trace": (("slot", "packet", "node", "action", "remaining_m", "delivered"),
                    ("-", "-", "-", "-", "m", "bool")),
    "linkbudget": (("component", "db"), ("-", "dB")),
    "geometry": (("slot", "plane", "sat", "x_m", "y_m", "z_m", "anomaly_rad", "node", "elevation_deg", "covers_aoi"),
                 ("-", "-", "-", "m", "m", "m", "rad", "-", "deg", "bool")),
    "association": (("rue", "gbs", "satellite", "cluster", "distance_m"), ("-", "-", "-", "-", "m")),
    "rates": (("rue", "slot", "rate_bps", "power_w"), ("-", "-", "bit/s", "W")),
    "rate_vs_distance": (("scheme", "distance_m", "seed", "mean_rate_bps"), ("-", "m", "-", "bit/s")),
    "rate_vs_nr": (("scheme", "num_elements", "seed", "mean_rate_bps"), ("-", "-", "-", "bit/s")),
    "latency_vs_size": (("packet_size_bits", "seed", "mean_latency_s", "delivered"), ("bit", "-", "s", "count")),
    "reward_vs_batch": (("minibatch", "seed", "reward_mean"), ("-", "-", "-")),
}


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seed: int
    workers: int

    def line(self) -> str:
        return (f"# spaceris schema={SCHEMA_VERSION} config={self.config_hash} "
                f"seed={self.seed} workers={self.workers}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        return repr(float(v))
    return str(v)


@dataclass
class ResultTable:
    name: str
    rows: list[tuple]

    @property
    def columns(self) -> tuple[str, ...]:
        return SCHEMAS[self.name][0]

    @property
    def units(self) -> tuple[str, ...]:
        return SCHEMAS[self.name][1]

    def render(self, prov: Provenance | None = None) -> str:
        buf = io.StringIO()
        if prov is not None:
            buf.write(prov.line() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerow(self.units)
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"{self.name}: row has {len(row)} fields, schema has {len(self.columns)}")
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, out_dir, prov: Provenance | None = None) -> Path:
        path = Path(out_dir) / f"{self.name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.render(prov))
        return path


def write_rows(path, name: str, rows: Iterable[Sequence], prov: Provenance | None = None) -> Path:
    """Write ``rows`` under schema ``name`` to an explicit path."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(ResultTable(name, [tuple(r) for r in rows]).render(prov))
    return path


def read_table(path) -> tuple[dict[str, str], list[str], list[str], list[list[str]]]:
    """(provenance fields, columns, units, data rows) of a file written here."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    meta = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
        lines = lines[1:]
    rows = list(csv.reader([ln for ln in lines if ln]))
    return meta, rows[0], rows[1], rows[2:]
