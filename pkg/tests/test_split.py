import numpy as np
import pytest

from sdmkit.errors import DegenerateSplitError, FormatError
from sdmkit.split import block_holdout, cell_index, load_split, save_split
from conftest import make_table

CELL = 1.0 / 6.0


def uniform_table(rng, n=100, n_cells=10):
    # n_cells distinct cells along the lon axis, n/n_cells points each
    points = []
    per = n // n_cells
    for c in range(n_cells):
        base_lon = -170 + c * 1.0  # one degree apart -> distinct 1/6-degree cells
        for _ in range(per):
            points.append((base_lon + rng.uniform(0, 0.1), 10 + rng.uniform(0, 0.1), {0}))
    return make_table(points)


class TestCellIndex:
    def test_origin(self):
        assert cell_index(-180, -90, CELL) == (0, 0)

    def test_worked_point(self):
        assert cell_index(3.05, 43.61, CELL) == (1098, 801)

    def test_one_cell_shift_in_lon(self):
        assert cell_index(3.05 + CELL, 43.61, CELL) == (1099, 801)

    def test_matches_floor_formula_randomized(self):
        import math

        rng = np.random.default_rng(1)
        for _ in range(50):
            lon = rng.uniform(-180, 180)
            lat = rng.uniform(-90, 90)
            cx, cy = cell_index(lon, lat, CELL)
            assert cx == math.floor((lon + 180) / CELL)
            assert cy == math.floor((lat + 90) / CELL)


class TestBlockHoldout:
    def test_greedy_crosses_target(self):
        table = uniform_table(np.random.default_rng(0))
        split = block_holdout(table, target_val_fraction=0.15, seed=3)
        n_val_cells = len({split.cell_of[s] for s in split.partition("val")})
        assert n_val_cells == 2
        assert split.val_fraction == pytest.approx(0.20)

    def test_determinism(self):
        table = uniform_table(np.random.default_rng(0))
        a = block_holdout(table, target_val_fraction=0.15, seed=11)
        b = block_holdout(table, target_val_fraction=0.15, seed=11)
        assert a.assignment == b.assignment

    def test_block_purity_two_cells(self):
        points = [(-170 + (i % 2), 0.05, {0}) for i in range(40)]
        split = block_holdout(make_table(points), target_val_fraction=0.15, seed=0)
        cells_by_partition = {}
        for sid, part in split.assignment.items():
            cells_by_partition.setdefault(split.cell_of[sid], set()).add(part)
        assert all(len(parts) == 1 for parts in cells_by_partition.values())
        assert set(split.assignment.values()) == {"train", "val"}

    def test_block_purity_general(self):
        rng = np.random.default_rng(4)
        points = [(rng.uniform(-10, 10), rng.uniform(-10, 10), {0}) for _ in range(300)]
        split = block_holdout(make_table(points), seed=7)
        by_cell = {}
        for sid, part in split.assignment.items():
            by_cell.setdefault(split.cell_of[sid], set()).add(part)
        assert all(len(parts) == 1 for parts in by_cell.values())

    def test_monotone_coverage_in_target(self):
        table = uniform_table(np.random.default_rng(0))
        prev_cells = set()
        for target in (0.1, 0.2, 0.3, 0.5):
            split = block_holdout(table, target_val_fraction=target, seed=5)
            cells = {split.cell_of[s] for s in split.partition("val")}
            assert prev_cells <= cells
            prev_cells = cells

    def test_fraction_bound(self):
        rng = np.random.default_rng(9)
        points = [(rng.uniform(-5, 5), rng.uniform(-5, 5), {0}) for _ in range(500)]
        table = make_table(points)
        split = block_holdout(table, target_val_fraction=0.15, seed=2)
        cell_counts = {}
        for sid, cell in split.cell_of.items():
            cell_counts[cell] = cell_counts.get(cell, 0) + 1
        max_share = max(cell_counts.values()) / len(table)
        assert 0.15 <= split.val_fraction < 0.15 + max_share + 1e-12

    def test_single_cell_degenerate(self):
        points = [(0.01 * i / 100, 0.001, {0}) for i in range(5)]
        with pytest.raises(DegenerateSplitError):
            block_holdout(make_table(points))


class TestSplitRoundTrip:
    def test_save_load(self, tmp_path):
        table = uniform_table(np.random.default_rng(0))
        split = block_holdout(table, seed=1)
        path = str(tmp_path / "split.csv")
        save_split(split, path)
        loaded = load_split(path)
        assert loaded.assignment == split.assignment
        assert loaded.cell_of == split.cell_of

    def test_test_alias(self, tmp_path):
        path = tmp_path / "split.csv"
        path.write_text("surveyId,partition,cx,cy\na,train,1,2\nb,test,3,4\n")
        loaded = load_split(str(path))
        assert loaded.assignment == {"a": "train", "b": "val"}

    def test_unknown_token(self, tmp_path):
        path = tmp_path / "split.csv"
        path.write_text("surveyId,partition,cx,cy\na,holdout,1,2\n")
        with pytest.raises(FormatError, match="holdout"):
            load_split(str(path))

    def test_hand_written_three_rows(self, tmp_path):
        path = tmp_path / "split.csv"
        path.write_text("surveyId,partition,cx,cy\na,train,0,0\nb,val,1,0\nc,train,0,1\n")
        assert len(load_split(str(path)).assignment) == 3
