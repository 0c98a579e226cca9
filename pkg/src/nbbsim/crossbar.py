"""Resistive-network model of 1R and 1T1R crossbars.

Two solvers are provided: an ideal-wire fast path (columns held at
virtual ground) and a full nodal solve with per-segment wire resistance.
The nodal discretization places one node per cell per rail side plus a
rail-entry node per row and column; zero-resistance segments are merged
into supernodes instead of being assigned a huge conductance.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .device import DeviceParams, MemristorCell, sample_device
from .errors import SingularNetworkError


class Topology(Enum):
    PASSIVE_1R = "passive_1r"
    ACTIVE_1T1R = "active_1t1r"


class CrossbarArray:
    """Grid of memristor cells with wire parasitics and optional selectors.

    For the active topology each cell sits in series with an ideal
    switch plus constant on-resistance; the gate mask selects which
    switches conduct. Passive arrays ignore the mask (always on).
    """

    def __init__(self, rows: int, cols: int, topology: Topology,
                 cells: list[list[MemristorCell]],
                 r_wire_segment: float = 1.0,
                 r_transistor_on: float = 500.0,
                 gate_mask: np.ndarray | None = None):
        if rows < 1 or cols < 1:
            raise ValueError(f"array shape must be at least 1x1, got {rows}x{cols}")
        if r_wire_segment < 0.0:
            raise ValueError("wire segment resistance must be non-negative")
        if r_transistor_on < 0.0:
            raise ValueError("selector on-resistance must be non-negative")
        if len(cells) != rows or any(len(r) != cols for r in cells):
            raise ValueError("cell grid does not match the declared shape")
        self.rows = rows
        self.cols = cols
        self.topology = topology
        self.cells = cells
        self.r_wire_segment = r_wire_segment
        self.r_transistor_on = r_transistor_on
        if gate_mask is None:
            gate_mask = np.zeros((rows, cols), dtype=bool)
        else:
            gate_mask = np.asarray(gate_mask, dtype=bool).copy()
            if gate_mask.shape != (rows, cols):
                raise ValueError("gate mask shape does not match the array")
        self.gate_mask = gate_mask

    @classmethod
    def build(cls, rows: int, cols: int, topology: Topology,
              params: DeviceParams, rng: np.random.Generator,
              **kwargs) -> "CrossbarArray":
        """Create an array of freshly sampled devices (device-to-device spread)."""
        cells = [[sample_device(params, rng) for _ in range(cols)] for _ in range(rows)]
        return cls(rows, cols, topology, cells, **kwargs)

    @classmethod
    def uniform(cls, rows: int, cols: int, topology: Topology,
                params: DeviceParams, x: float = 0.0, **kwargs) -> "CrossbarArray":
        """Create an array of identical cells at state x (no variability draw)."""
        cells = [[MemristorCell(x=x, params=params) for _ in range(cols)]
                 for _ in range(rows)]
        return cls(rows, cols, topology, cells, **kwargs)

    def cell(self, row: int, col: int) -> MemristorCell:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"cell ({row}, {col}) outside {self.rows}x{self.cols} array")
        return self.cells[row][col]

    def gates_on(self) -> np.ndarray:
        """Effective gate state: passive arrays behave as all-on."""
        if self.topology is Topology.PASSIVE_1R:
            return np.ones((self.rows, self.cols), dtype=bool)
        return self.gate_mask

    def set_gate(self, row: int, col: int, on: bool) -> None:
        self.gate_mask[row, col] = on

    def select_only(self, row: int, col: int) -> None:
        """Enable exactly one selector, all others off."""
        self.gate_mask[:] = False
        self.gate_mask[row, col] = True

    def all_gates(self, on: bool) -> None:
        self.gate_mask[:] = on

    def conductances(self) -> np.ndarray:
        """Cell conductances G(x), ignoring selectors and wires."""
        return np.array([[c.conductance() for c in row] for row in self.cells])

    def branch_conductances(self) -> np.ndarray:
        """Per-cell branch conductance including selector series resistance.

        Gated-off branches are 0.
        """
        g = self.conductances()
        if self.topology is Topology.ACTIVE_1T1R:
            g = 1.0 / (1.0 / g + self.r_transistor_on)
            g = np.where(self.gate_mask, g, 0.0)
        return g

    def series_wire_ohm(self, row: int, col: int) -> float:
        """Wire resistance of the dedicated path entry->cell->entry.

        Row entries attach at column index 0, column entries at row
        index 0, so the path crosses (col+1) + (row+1) segments. Exact
        for a single-cell path (all other branches open).
        """
        return (row + col + 2) * self.r_wire_segment


@dataclass(frozen=True)
class RailDrive:
    """Applied rail potentials; None marks a floating rail.

    Column entries carry the potential the TIA or source pins them to
    (virtual ground is 0.0).
    """

    row_voltages: tuple
    col_voltages: tuple

    def __post_init__(self):
        object.__setattr__(self, "row_voltages", tuple(self.row_voltages))
        object.__setattr__(self, "col_voltages", tuple(self.col_voltages))
        if not any(v is not None for v in self.row_voltages):
            raise ValueError("at least one row must be driven")
        if not any(v is not None for v in self.col_voltages):
            raise ValueError("at least one column must be sensed or driven")


@dataclass
class NodalSolution:
    """Operating point of one nodal solve."""

    col_currents: np.ndarray            # into the column terminals (A)
    row_currents: np.ndarray            # injected by the row drivers (A)
    v_row_nodes: np.ndarray             # rows x cols row-side node voltages
    v_col_nodes: np.ndarray             # rows x cols column-side node voltages
    branch_conductances: np.ndarray     # rows x cols, 0 where gated off
    conservation_residual: float        # sum of all injected rail currents (A)

    def cell_current(self, row: int, col: int) -> float:
        """Current through one cell branch, positive from row to column."""
        g = self.branch_conductances[row, col]
        return g * (self.v_row_nodes[row, col] - self.v_col_nodes[row, col])


def solve_ideal(array: CrossbarArray, drive: RailDrive) -> np.ndarray:
    """Column currents with wire resistance neglected.

    Valid only when every non-floating column sits at virtual ground;
    each column current is then the plain conductance-weighted sum of
    the driven row voltages.
    """
    for j, v in enumerate(drive.col_voltages):
        if v is not None and v != 0.0:
            raise ValueError(
                f"ideal solve requires virtual-ground columns, column {j} at {v} V")
    v_rows = np.array([0.0 if v is None else v for v in drive.row_voltages])
    if len(v_rows) != array.rows or len(drive.col_voltages) != array.cols:
        raise ValueError("drive shape does not match the array")
    currents = array.branch_conductances().T @ v_rows
    floating = np.array([v is None for v in drive.col_voltages])
    currents[floating] = 0.0
    return currents


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def solve_nodal(array: CrossbarArray, drive: RailDrive) -> NodalSolution:
    """Full DC nodal solve including per-segment wire resistance.

    Floating rails stay in the system as zero-injection unknowns.
    Connected components without any pinned node carry no current and
    are grounded at an arbitrary node to keep the system non-singular;
    a drive with no pinned node at all raises SingularNetworkError.
    """
    rows, cols = array.rows, array.cols
    if len(drive.row_voltages) != rows or len(drive.col_voltages) != cols:
        raise ValueError("drive shape does not match the array")
    rc = rows * cols

    def row_node(i, j):
        return i * cols + j

    def col_node(i, j):
        return rc + i * cols + j

    def row_entry(i):
        return 2 * rc + i

    def col_entry(j):
        return 2 * rc + rows + j

    n_raw = 2 * rc + rows + cols
    uf = _UnionFind(n_raw)
    branches: list[tuple[int, int, float]] = []

    r_w = array.r_wire_segment
    g_w = None if r_w == 0.0 else 1.0 / r_w
    for i in range(rows):
        chain = [row_entry(i)] + [row_node(i, j) for j in range(cols)]
        for a, b in zip(chain, chain[1:]):
            if g_w is None:
                uf.union(a, b)
            else:
                branches.append((a, b, g_w))
    for j in range(cols):
        chain = [col_entry(j)] + [col_node(i, j) for i in range(rows)]
        for a, b in zip(chain, chain[1:]):
            if g_w is None:
                uf.union(a, b)
            else:
                branches.append((a, b, g_w))

    g_cells = array.branch_conductances()
    for i in range(rows):
        for j in range(cols):
            if g_cells[i, j] > 0.0:
                branches.append((row_node(i, j), col_node(i, j), g_cells[i, j]))

    # Pinned (Dirichlet) supernodes from the driven rails.
    pinned: dict[int, float] = {}
    for i, v in enumerate(drive.row_voltages):
        if v is not None:
            pinned[uf.find(row_entry(i))] = v
    for j, v in enumerate(drive.col_voltages):
        if v is not None:
            pinned[uf.find(col_entry(j))] = v
    if not pinned:
        raise SingularNetworkError("every rail is floating; no operating point")

    # Ground one node of each component that ends up with no pinned node.
    comp = _UnionFind(n_raw)
    for a, b, _ in branches:
        comp.union(uf.find(a), uf.find(b))
    comp_has_pin = {comp.find(r) for r in pinned}
    roots = sorted({uf.find(n) for n in range(n_raw)})
    for r in roots:
        c = comp.find(r)
        if c not in comp_has_pin:
            pinned[r] = 0.0
            comp_has_pin.add(c)

    index = {r: k for k, r in enumerate(roots)}
    n = len(roots)

    data, ii, jj = [], [], []
    for a, b, g in branches:
        ka, kb = index[uf.find(a)], index[uf.find(b)]
        ii += [ka, kb, ka, kb]
        jj += [ka, kb, kb, ka]
        data += [g, g, -g, -g]
    lap = sp.coo_matrix((data, (ii, jj)), shape=(n, n)).tocsr()

    v_all = np.zeros(n)
    fixed_idx = np.array(sorted(index[r] for r in pinned), dtype=int)
    v_all[[index[r] for r in pinned]] = [pinned[r] for r in pinned]
    unknown_mask = np.ones(n, dtype=bool)
    unknown_mask[fixed_idx] = False
    unknown_idx = np.nonzero(unknown_mask)[0]
    if unknown_idx.size:
        a_uu = lap[unknown_idx][:, unknown_idx].tocsc()
        rhs = -lap[unknown_idx][:, fixed_idx] @ v_all[fixed_idx]
        try:
            v_all[unknown_idx] = spla.spsolve(a_uu, rhs)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SingularNetworkError(str(exc)) from exc
        if not np.all(np.isfinite(v_all)):
            raise SingularNetworkError("nodal system is singular")

    injected = lap @ v_all

    def voltage(node):
        return v_all[index[uf.find(node)]]

    v_row_nodes = np.array([[voltage(row_node(i, j)) for j in range(cols)]
                            for i in range(rows)])
    v_col_nodes = np.array([[voltage(col_node(i, j)) for j in range(cols)]
                            for i in range(rows)])

    row_currents = np.zeros(rows)
    for i, v in enumerate(drive.row_voltages):
        if v is not None:
            row_currents[i] = injected[index[uf.find(row_entry(i))]]
    col_currents = np.zeros(cols)
    for j, v in enumerate(drive.col_voltages):
        if v is not None:
            # Positive toward the external sink (into the TIA).
            col_currents[j] = -injected[index[uf.find(col_entry(j))]]

    residual = float(injected[fixed_idx].sum())
    return NodalSolution(
        col_currents=col_currents,
        row_currents=row_currents,
        v_row_nodes=v_row_nodes,
        v_col_nodes=v_col_nodes,
        branch_conductances=g_cells,
        conservation_residual=residual,
    )


def sneak_current_demo(array: CrossbarArray, target_cell: tuple[int, int],
                       v_read: float) -> float:
    """Fraction of the sensed column current flowing through the target cell.

    Half-select read: the target row is driven, every other rail floats,
    and the target column sits at virtual ground. Passive arrays expose
    the sneak-path error; for 1T1R the target selector alone is enabled
    and the ratio collapses to 1.
    """
    row, col = target_cell
    array.cell(row, col)  # bounds check
    if array.topology is Topology.ACTIVE_1T1R:
        saved = array.gate_mask.copy()
        array.select_only(row, col)
    try:
        drive = RailDrive(
            row_voltages=tuple(v_read if i == row else None for i in range(array.rows)),
            col_voltages=tuple(0.0 if j == col else None for j in range(array.cols)),
        )
        sol = solve_nodal(array, drive)
        total = sol.col_currents[col]
        if total == 0.0:
            raise SingularNetworkError("no current reaches the sensed column")
        return sol.cell_current(row, col) / total
    finally:
        if array.topology is Topology.ACTIVE_1T1R:
            array.gate_mask = saved
