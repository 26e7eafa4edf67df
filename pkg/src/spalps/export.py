"""Serialization of equation systems, trajectories and ensembles.

Formats:

* equations as text (``text``) or as a structured JSON document (``json``),
* trajectories as CSV with columns ``step,phase,state,location,value``,
* ensembles as CSV with columns
  ``step,phase,state,location,replica_mean,replica_std,replicas``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np

from . import FORMAT_VERSION
from .expr import from_data, to_data
from .habitat import Habitat
from .meanfield import EquationSystem, Frame, Trajectory, render_equations
from .montecarlo import EnsembleStats
from .terms import _frac_text

EQUATIONS_SCHEMA = "spalps-equations"
TRAJECTORY_COLUMNS = ["step", "phase", "state", "location", "value"]
ENSEMBLE_COLUMNS = ["step", "phase", "state", "location", "replica_mean", "replica_std", "replicas"]


def write_atomic(path: Union[str, Path], data: Union[str, bytes]) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Equations.


def _number(value):
    f = float(value)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def equations_to_data(eqs: EquationSystem) -> dict:
    h = eqs.habitat
    return {
        "schema": EQUATIONS_SCHEMA,
        "version": FORMAT_VERSION,
        "fingerprint": eqs.fingerprint,
        "habitat": {"kind": h.kind, "locations": list(h.names), "edges": [list(e) for e in h.edges]},
        "params": {k: _frac_text(Fraction(v)) for k, v in eqs.params.items()},
        "states": [
            {"label": label, "species": sp, "kind": kind}
            for label, sp, kind in zip(eqs.labels, eqs.species, eqs.kinds)
        ],
        "init": [[_number(v) for v in row] for row in np.asarray(eqs.init)],
        "equations": [
            {"state": i, "location": loc, "terms": [{"source": k, "expr": to_data(e)} for k, e in parts]}
            for (i, loc), parts in eqs.rhs.items()
        ],
    }


def equations_from_data(data: dict) -> EquationSystem:
    if data.get("schema") != EQUATIONS_SCHEMA:
        raise ValueError("not an equation document")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported equation document version {data.get('version')!r}")
    h = data["habitat"]
    habitat = Habitat(h["kind"], tuple(h["locations"]), tuple(tuple(e) for e in h["edges"]))
    init_rows = data["init"]
    dtype = np.int64 if all(isinstance(v, int) for row in init_rows for v in row) else float
    init = np.array(init_rows, dtype=dtype).reshape(len(data["states"]), habitat.m)
    rhs = {
        (eq["state"], eq["location"]): [(t["source"], from_data(t["expr"])) for t in eq["terms"]]
        for eq in data["equations"]
    }
    return EquationSystem(
        [s["label"] for s in data["states"]],
        [s["species"] for s in data["states"]],
        [s["kind"] for s in data["states"]],
        habitat,
        init,
        rhs,
        {k: Fraction(v) for k, v in data["params"].items()},
        data.get("fingerprint", ""),
    )


def equations_to_json(eqs: EquationSystem) -> str:
    return json.dumps(equations_to_data(eqs), indent=1) + "\n"


def equations_from_json(text: str) -> EquationSystem:
    return equations_from_data(json.loads(text))


# ---------------------------------------------------------------------------
# Trajectories and ensembles.


def _value_text(v) -> str:
    f = float(v)
    return repr(f)


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for frame in traj.frames:
        for i, label in enumerate(traj.labels):
            for j, loc in enumerate(traj.locations):
                w.writerow([frame.step, frame.phase, label, loc, _value_text(frame.occupancy[i, j])])
    return buf.getvalue()


def _grid(rows, columns: list[str]):
    """Group CSV rows into per-step dicts keyed by (state, location)."""
    labels: dict[str, int] = {}
    locations: dict[str, int] = {}
    steps: dict[int, dict] = {}
    for row in rows:
        missing = [c for c in columns if c not in row]
        if missing:
            raise ValueError(f"missing column(s): {', '.join(missing)}")
        labels.setdefault(row["state"], len(labels))
        locations.setdefault(row["location"], len(locations))
        steps.setdefault(int(row["step"]), {"phase": row["phase"], "cells": {}})["cells"][
            (row["state"], row["location"])
        ] = row
    return labels, locations, dict(sorted(steps.items()))


def read_trajectory_csv(text: str) -> Trajectory:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or list(reader.fieldnames) != TRAJECTORY_COLUMNS:
        raise ValueError(f"expected columns {','.join(TRAJECTORY_COLUMNS)}")
    labels, locations, steps = _grid(reader, TRAJECTORY_COLUMNS)
    frames = []
    for step, data in steps.items():
        occ = np.zeros((len(labels), len(locations)))
        for (s, l), row in data["cells"].items():
            occ[labels[s], locations[l]] = float(row["value"])
        frames.append(Frame(step, data["phase"], occ))
    return Trajectory(frames, list(labels), list(locations))


def ensemble_to_csv(stats: EnsembleStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ENSEMBLE_COLUMNS)
    for t, phase in enumerate(stats.phases):
        for i, label in enumerate(stats.labels):
            for j, loc in enumerate(stats.locations):
                w.writerow([t, phase, label, loc, _value_text(stats.mean[t, i, j]),
                            _value_text(stats.std[t, i, j]), stats.replicas])
    return buf.getvalue()


def read_ensemble_csv(text: str) -> EnsembleStats:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or list(reader.fieldnames) != ENSEMBLE_COLUMNS:
        raise ValueError(f"expected columns {','.join(ENSEMBLE_COLUMNS)}")
    labels, locations, steps = _grid(reader, ENSEMBLE_COLUMNS)
    shape = (len(steps), len(labels), len(locations))
    mean, std = np.zeros(shape), np.zeros(shape)
    replicas = 0
    phases = []
    for t, data in enumerate(steps.values()):
        phases.append(data["phase"])
        for (s, l), row in data["cells"].items():
            i, j = labels[s], locations[l]
            mean[t, i, j] = float(row["replica_mean"])
            std[t, i, j] = float(row["replica_std"])
            replicas = int(row["replicas"])
    return EnsembleStats(mean, std, replicas, phases, list(labels), list(locations))


def export(obj, fmt: str) -> bytes:
    """Serialize an equation system (``text``/``json``) or trajectory (``csv``)."""
    if isinstance(obj, EquationSystem):
        if fmt == "text":
            return render_equations(obj).encode("utf-8")
        if fmt == "json":
            return equations_to_json(obj).encode("utf-8")
    elif isinstance(obj, Trajectory):
        if fmt == "csv":
            return trajectory_to_csv(obj).encode("utf-8")
    elif isinstance(obj, EnsembleStats):
        if fmt == "csv":
            return ensemble_to_csv(obj).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r} for {type(obj).__name__}")
