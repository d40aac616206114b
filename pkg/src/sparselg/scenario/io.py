"""Frame and diagnostic output."""

from __future__ import annotations

import csv
from dataclasses import astuple, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from ..fem import write_obj
from ..integrator import IterationRecord

LOG_COLUMNS = tuple(f.name for f in fields(IterationRecord))
_INT_COLUMNS = {"frame", "lg_iter", "cr_iters", "active_contacts"}


def frame_filename(index: int) -> str:
    return f"frame_{int(index):05d}.obj"


def write_frame(x: np.ndarray, faces: np.ndarray, index: int, directory: str | Path) -> Path:
    """Write positions and surface faces to ``directory/frame_%05d.obj`` (17 significant digits)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / frame_filename(index)
    write_obj(path, np.asarray(x, dtype=float).reshape(-1, 3), np.asarray(faces, dtype=np.int64))
    return path


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))  # shortest round-trip representation


def write_log(records: Iterable[IterationRecord], path: str | Path) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in astuple(rec)])
    return path


class LogWriter:
    """Incremental CSV writer, one row per L-G iteration."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if self.path.parent != Path(""):
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(LOG_COLUMNS)

    def write(self, records: Iterable[IterationRecord]) -> None:
        for rec in records:
            self._w.writerow([_fmt(v) for v in astuple(rec)])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path: str | Path) -> list[IterationRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            IterationRecord(**{k: (int(v) if k in _INT_COLUMNS else float(v)) for k, v in row.items()})
            for row in reader
        ]
