"""Spatial block holdout: assign whole geographic cells to train or val.

Cells live on a fixed global grid anchored at (-180, -90) so indices are
stable across datasets. Occupied cells are shuffled with a seeded PRNG
and accumulated greedily into the validation zone set until the point
fraction first reaches the target; every point in a selected cell goes to
val, all others to train, which guarantees no cell mixes partitions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplitError, FormatError
from .geodata import ObservationTable

DEFAULT_CELL_SIZE = 1.0 / 6.0  # 10 arcminutes
DEFAULT_VAL_FRACTION = 0.15


def cell_index(lon: float, lat: float, cell_size: float = DEFAULT_CELL_SIZE) -> tuple[int, int]:
    """Integer cell indices of a point on the fixed global grid."""
    cx = math.floor((lon + 180.0) / cell_size)
    cy = math.floor((lat + 90.0) / cell_size)
    return cx, cy


@dataclass(frozen=True)
class SpatialSplit:
    assignment: dict[str, str]  # survey_id -> "train" | "val"
    cell_of: dict[str, tuple[int, int]]
    cell_size: float
    seed: int
    target_val_fraction: float

    def partition(self, name: str) -> list[str]:
        return [sid for sid, part in self.assignment.items() if part == name]

    @property
    def val_fraction(self) -> float:
        n = len(self.assignment)
        return sum(1 for p in self.assignment.values() if p == "val") / n if n else 0.0


def block_holdout(
    table: ObservationTable,
    cell_size: float = DEFAULT_CELL_SIZE,
    target_val_fraction: float = DEFAULT_VAL_FRACTION,
    seed: int = 0,
) -> SpatialSplit:
    """Greedy shuffled-cell holdout reaching at least the target val fraction."""
    if not table.records:
        raise DegenerateSplitError("cannot split an empty observation table")
    if not (0.0 < target_val_fraction < 1.0):
        raise DegenerateSplitError("target_val_fraction must be in (0, 1)")
    cell_of = {r.survey_id: cell_index(r.lon, r.lat, cell_size) for r in table.records}
    cells: dict[tuple[int, int], list[str]] = {}
    for sid, cell in cell_of.items():
        cells.setdefault(cell, []).append(sid)
    if len(cells) < 2:
        raise DegenerateSplitError(
            "all observations fall in a single cell; cannot form both partitions"
        )
    order = sorted(cells)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    total = len(table.records)
    val_cells: set[tuple[int, int]] = set()
    val_count = 0
    for cell in order:
        if val_count / total >= target_val_fraction:
            break
        if len(val_cells) == len(cells) - 1:
            break  # keep at least one train cell
        val_cells.add(cell)
        val_count += len(cells[cell])
    assignment = {
        sid: ("val" if cell in val_cells else "train") for sid, cell in cell_of.items()
    }
    return SpatialSplit(
        assignment=assignment,
        cell_of=cell_of,
        cell_size=cell_size,
        seed=seed,
        target_val_fraction=target_val_fraction,
    )


def save_split(split: SpatialSplit, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["surveyId", "partition", "cx", "cy"])
        for sid, part in split.assignment.items():
            cx, cy = split.cell_of[sid]
            writer.writerow([sid, part, cx, cy])


def load_split(
    path: str,
    cell_size: float = DEFAULT_CELL_SIZE,
    seed: int = 0,
    target_val_fraction: float = DEFAULT_VAL_FRACTION,
) -> SpatialSplit:
    """Load a split CSV; "test" is accepted as an alias of "val"."""
    assignment: dict[str, str] = {}
    cell_of: dict[str, tuple[int, int]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"surveyId", "partition", "cx", "cy"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise FormatError(f"{path}: missing column(s) in split file")
        for i, row in enumerate(reader, start=2):
            part = row["partition"]
            if part == "test":
                part = "val"
            if part not in ("train", "val"):
                raise FormatError(f"{path} row {i}: unknown partition token {part!r}")
            assignment[row["surveyId"]] = part
            cell_of[row["surveyId"]] = (int(row["cx"]), int(row["cy"]))
    return SpatialSplit(
        assignment=assignment,
        cell_of=cell_of,
        cell_size=cell_size,
        seed=seed,
        target_val_fraction=target_val_fraction,
    )
