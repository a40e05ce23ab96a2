"""Criticality spaces: indicator tuples mapped to ordered risk levels.

Cells and boxes are half-open, closed at the low edge and open at the high
edge, except that the top edge of the domain belongs to the cells touching it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Sequence

DEFAULT_LEVELS = ("acceptable", "moderate", "critical")


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    indicator: str  # "entity.attribute"
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError(f"axis {self.indicator}: empty domain [{self.lo}, {self.hi})")

    def check(self, value: float) -> None:
        if not self.lo <= value <= self.hi:
            raise OutOfDomainError(
                f"{self.indicator}={value} outside domain [{self.lo}, {self.hi}]"
            )


def _in_interval(v: float, lo: float, hi: float, domain_hi: float) -> bool:
    return lo <= v < hi or (v == hi == domain_hi)


def _check_level_set(levels: Sequence[str]) -> None:
    if len(levels) < 2:
        raise ValueError("a criticality scale needs at least two levels")
    if len(set(levels)) != len(levels):
        raise ValueError(f"duplicate level names in {list(levels)}")


@dataclass(frozen=True)
class Cell:
    x0: float
    x1: float
    y0: float
    y1: float
    level: str

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True)
class RegionMap2D:
    x: Axis
    y: Axis
    cells: tuple[Cell, ...]
    levels: tuple[str, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        _check_level_set(self.levels)
        for c in self.cells:
            if c.level not in self.levels:
                raise ValueError(f"cell level {c.level!r} not in {self.levels}")

    @classmethod
    def grid(
        cls,
        x: Axis,
        y: Axis,
        x_edges: Sequence[float],
        y_edges: Sequence[float],
        levels_by_row: Sequence[Sequence[str]],
        levels: Sequence[str] = DEFAULT_LEVELS,
    ) -> "RegionMap2D":
        """Rectilinear grid; ``levels_by_row[j][i]`` labels the cell in x-band i, y-band j."""
        if len(levels_by_row) != len(y_edges) - 1:
            raise ValueError("need one row of levels per y band")
        cells = []
        for j, row in enumerate(levels_by_row):
            if len(row) != len(x_edges) - 1:
                raise ValueError(f"row {j}: need one level per x band")
            for i, level in enumerate(row):
                cells.append(Cell(x_edges[i], x_edges[i + 1], y_edges[j], y_edges[j + 1], level))
        return cls(x, y, tuple(cells), tuple(levels))

    @property
    def indicators(self) -> tuple[str, str]:
        return (self.x.indicator, self.y.indicator)

    @property
    def max_level(self) -> str:
        return self.levels[-1]

    def cell_index(self, point: tuple[float, float]) -> int:
        px, py = point
        self.x.check(px)
        self.y.check(py)
        for idx, c in enumerate(self.cells):
            if _in_interval(px, c.x0, c.x1, self.x.hi) and _in_interval(py, c.y0, c.y1, self.y.hi):
                return idx
        raise OutOfDomainError(f"point {point} falls in a gap of the partition")

    def promote(self, index: int) -> "RegionMap2D":
        """Copy with cell ``index`` raised one level (no-op at the top level)."""
        c = self.cells[index]
        rank = self.levels.index(c.level)
        if rank == len(self.levels) - 1:
            return self
        cells = list(self.cells)
        cells[index] = replace(c, level=self.levels[rank + 1])
        return replace(self, cells=tuple(cells))


@dataclass(frozen=True)
class Box:
    id: str
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    level: str

    @property
    def volume(self) -> float:
        v = 1.0
        for a, b in zip(self.lo, self.hi):
            v *= b - a
        return v


@dataclass(frozen=True)
class RegionMap3D:
    axes: tuple[Axis, Axis, Axis]
    boxes: tuple[Box, ...]
    default_level: str = DEFAULT_LEVELS[0]
    levels: tuple[str, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        _check_level_set(self.levels)
        for b in self.boxes:
            if b.level not in self.levels:
                raise ValueError(f"box {b.id}: level {b.level!r} not in {self.levels}")
        if self.default_level not in self.levels:
            raise ValueError(f"default level {self.default_level!r} not in {self.levels}")

    @property
    def indicators(self) -> tuple[str, str, str]:
        return tuple(a.indicator for a in self.axes)  # type: ignore[return-value]

    @property
    def max_level(self) -> str:
        return self.levels[-1]

    def box_index(self, point: tuple[float, float, float]) -> int | None:
        for a, v in zip(self.axes, point):
            a.check(v)
        for idx, b in enumerate(self.boxes):
            if all(
                _in_interval(v, lo, hi, a.hi) for v, lo, hi, a in zip(point, b.lo, b.hi, self.axes)
            ):
                return idx
        return None

    def promote(self, index: int) -> "RegionMap3D":
        b = self.boxes[index]
        rank = self.levels.index(b.level)
        if rank == len(self.levels) - 1:
            return self
        boxes = list(self.boxes)
        boxes[index] = replace(b, level=self.levels[rank + 1])
        return replace(self, boxes=tuple(boxes))


RegionMap = RegionMap2D | RegionMap3D


def classify2d(m: RegionMap2D, point: tuple[float, float]) -> str:
    return m.cells[m.cell_index(point)].level


def classify3d(m: RegionMap3D, point: tuple[float, float, float]) -> str:
    idx = m.box_index(point)
    return m.default_level if idx is None else m.boxes[idx].level


def classify(m: RegionMap, point: Sequence[float]) -> str:
    if isinstance(m, RegionMap2D):
        return classify2d(m, (point[0], point[1]))
    return classify3d(m, (point[0], point[1], point[2]))


# ---------------------------------------------------------------------------
# partition checks


def _overlap_1d(a0: float, a1: float, b0: float, b1: float) -> bool:
    return max(a0, b0) < min(a1, b1)


def _validate_2d(m: RegionMap2D) -> list[str]:
    out: list[str] = []
    x, y = m.x, m.y
    for i, c in enumerate(m.cells):
        if not (c.x1 > c.x0 and c.y1 > c.y0):
            out.append(f"cell {i}: empty rectangle")
        if c.x0 < x.lo or c.x1 > x.hi or c.y0 < y.lo or c.y1 > y.hi:
            out.append(f"cell {i}: outside domain")
    for (i, a), (j, b) in itertools.combinations(enumerate(m.cells), 2):
        if _overlap_1d(a.x0, a.x1, b.x0, b.x1) and _overlap_1d(a.y0, a.y1, b.y0, b.y1):
            out.append(f"overlap: cells {i} and {j}")
    # gaps: test every elementary rectangle of the compressed coordinate grid
    xs = sorted({x.lo, x.hi, *(v for c in m.cells for v in (c.x0, c.x1) if x.lo <= v <= x.hi)})
    ys = sorted({y.lo, y.hi, *(v for c in m.cells for v in (c.y0, c.y1) if y.lo <= v <= y.hi)})
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            covered = any(
                c.x0 <= x0 and x1 <= c.x1 and c.y0 <= y0 and y1 <= c.y1 for c in m.cells
            )
            if not covered:
                out.append(f"gap: [{x0:g},{x1:g}) x [{y0:g},{y1:g})")
    return out


def _validate_3d(m: RegionMap3D) -> list[str]:
    out: list[str] = []
    for b in m.boxes:
        if any(hi <= lo for lo, hi in zip(b.lo, b.hi)):
            out.append(f"box {b.id}: empty box")
        if any(lo < a.lo or hi > a.hi for lo, hi, a in zip(b.lo, b.hi, m.axes)):
            out.append(f"box {b.id}: outside domain")
    for a, b in itertools.combinations(m.boxes, 2):
        if all(_overlap_1d(a.lo[k], a.hi[k], b.lo[k], b.hi[k]) for k in range(3)):
            out.append(f"overlap: boxes {a.id} and {b.id}")
    return out


def validate_partition(m: RegionMap) -> list[str]:
    """Tiling defects of a 2D map, or overlapping/out-of-domain boxes of a 3D map."""
    if isinstance(m, RegionMap2D):
        return _validate_2d(m)
    return _validate_3d(m)
