"""Hierarchical datasets: one bundled real dataset and synthetic generators.

``tourism_au_dataset`` loads quarterly Australian visitor nights shipped with
the package (see ``data/NOTICE.txt``). The other functions synthesize data
shaped like common benchmark hierarchies. Each returns ``(edges, records, frequency)`` ready for
:func:`~hiforead.hierarchy.build_hierarchy` and
:func:`~hiforead.ingestion.build_series_frame`.
"""
from __future__ import annotations

import csv
import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .ingestion import Record, format_timestamp, load_long_csv, parse_timestamp

TOURISM_PURPOSES = ("Holiday", "Visiting", "Business", "Other")
TOURISM_STATES = ("NSW", "VIC", "QLD", "SA", "WA", "TAS", "NT", "ACT")
TOURISM_REGIONS = (13, 21, 13, 12, 5, 5, 6, 1)  # 76 regions


def tourism_au_dataset():
    """Total -> 7 states -> 27 zones -> 76 regions; 80 quarters (1998-Q1 to 2017-Q4)."""
    data = resources.files(__package__) / "data"
    with resources.as_file(data / "tourism_au_hierarchy.csv") as path:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    edges = [tuple(r) for r in rows[1:] if r]
    with resources.as_file(data / "tourism_au_observations.csv") as path:
        records = load_long_csv(path, "series_id", "timestamp", "value", "quarterly")
    return edges, records, "quarterly"


def small_dataset(T: int = 364, seed: int = 0):
    """Three levels, eight series: Total -> X(XA, XB, XC), Y(YA, YB); daily."""
    rng = np.random.default_rng(seed)
    edges = [("Total", "X"), ("Total", "Y"), ("X", "XA"), ("X", "XB"), ("X", "XC"), ("Y", "YA"), ("Y", "YB")]
    t = np.arange(T)
    start = dt.date(2022, 1, 3).toordinal()
    records = []
    for i, leaf in enumerate(("XA", "XB", "XC", "YA", "YB")):
        level = 50.0 + 25.0 * i
        weekly = 0.25 * level * np.cos(2 * np.pi * (t + i) / 7)
        monthly = (0.15 * level * np.sin(2 * np.pi * t / 28)) if i % 2 else 0.0
        trend = 0.02 * level * t / 7 * (1 if i < 3 else -0.3)
        y = level + trend + weekly + monthly + rng.normal(0, 0.05 * level, T)
        records.extend(Record(leaf, start + k, float(max(v, 0.0))) for k, v in enumerate(y))
    return edges, records, "daily"


def tourism_dataset(T: int = 80, seed: int = 0):
    """Total -> purpose -> state -> region, 304 quarterly bottom series from 1998-Q1."""
    rng = np.random.default_rng(seed)
    edges, records = [], []
    t = np.arange(T)
    q = t % 4
    start = parse_timestamp("1998-Q1", "quarterly")
    purpose_scale = dict(zip(TOURISM_PURPOSES, (1.0, 0.8, 0.45, 0.15)))
    purpose_growth = dict(zip(TOURISM_PURPOSES, (0.004, 0.003, 0.006, 0.0)))
    # northern states peak mid-year, southern ones in summer
    state_phase = dict(zip(TOURISM_STATES, (0, 0, 2, 0, 1, 0, 2, 3)))
    state_amp = dict(zip(TOURISM_STATES, (0.25, 0.3, 0.2, 0.2, 0.15, 0.35, 0.4, 0.1)))
    region_base = {}
    for state, n in zip(TOURISM_STATES, TOURISM_REGIONS):
        for r in range(1, n + 1):
            region_base[(state, r)] = float(np.exp(rng.normal(4.5, 0.9)))
    for purpose in TOURISM_PURPOSES:
        edges.append(("Total", purpose))
        amp_p = 1.0 if purpose == "Holiday" else 0.5
        for state, n in zip(TOURISM_STATES, TOURISM_REGIONS):
            snode = f"{purpose}/{state}"
            edges.append((purpose, snode))
            for r in range(1, n + 1):
                leaf = f"{snode}/R{r:02d}"
                edges.append((snode, leaf))
                base = region_base[(state, r)] * purpose_scale[purpose]
                phase = (state_phase[state] + int(rng.integers(0, 2))) % 4
                season = 1.0 + amp_p * state_amp[state] * np.cos(2 * np.pi * (q - phase) / 4)
                drift = np.cumsum(rng.normal(0, 0.02, T))
                level = base * np.exp(purpose_growth[purpose] * t + drift)
                noise_sd = 0.12 + 0.25 / np.sqrt(1.0 + base / 20.0)
                y = level * season * np.exp(rng.normal(0, noise_sd, T))
                records.extend(Record(leaf, start + k, float(round(v, 3))) for k, v in enumerate(y))
    return edges, records, "quarterly"


def traffic_dataset(n_leaves: int = 963, T: int = 440, seed: int = 0):
    """Lane occupancy rates in [0, 1]: leaves -> 4 random groups -> 2 pairs -> Total; daily."""
    rng = np.random.default_rng(seed)
    groups = rng.permutation(np.arange(n_leaves) % 4)
    edges = [("Total", "P1"), ("Total", "P2"), ("P1", "G1"), ("P1", "G2"), ("P2", "G3"), ("P2", "G4")]
    t = np.arange(T)
    start = dt.date(2008, 1, 1).toordinal()
    weekday = (start + t) % 7  # 0 = Monday
    weekend = (weekday >= 5).astype(float)
    records = []
    for i in range(n_leaves):
        leaf = f"S{i + 1:04d}"
        edges.append((f"G{groups[i] + 1}", leaf))
        base = rng.beta(2.0, 20.0)
        drop = rng.uniform(0.2, 0.6)
        annual = 0.05 * np.sin(2 * np.pi * (t + rng.integers(0, 365)) / 365.25)
        y = base * (1.0 - drop * weekend) * (1.0 + annual) + rng.normal(0, 0.1 * base, T)
        y = np.clip(y, 0.0, 1.0)
        records.extend(Record(leaf, start + k, float(round(v, 5))) for k, v in enumerate(y))
    return edges, records, "daily"


def write_dataset(outdir, edges, records, frequency: str, **config) -> Path:
    """Write ``observations.csv``, ``hierarchy.csv`` and a ``config.yaml`` pointing at them."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "hierarchy.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parent_id", "child_id"])
        w.writerows(edges)
    with (outdir / "observations.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "timestamp", "value"])
        for rec in records:
            w.writerow([rec.series_id, format_timestamp(rec.time, frequency), repr(rec.value)])
    cfg = {
        "data": {"observations": "observations.csv", "hierarchy": "hierarchy.csv"},
        "frequency": frequency,
        **config,
    }
    path = outdir / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


PRESETS = {
    "small": (small_dataset, {"horizon": 14, "folds": 4, "nonnegative": True, "output_dir": "out"}),
    "tourism": (tourism_au_dataset, {"horizon": 13, "folds": 4, "nonnegative": True, "output_dir": "out"}),
    "tourism-synthetic": (tourism_dataset, {"horizon": 13, "folds": 4, "nonnegative": True, "output_dir": "out"}),
    "traffic": (traffic_dataset, {"horizon": 70, "folds": 4, "fill_policy": "linear", "output_dir": "out"}),
}
