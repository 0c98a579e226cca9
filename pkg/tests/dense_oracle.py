"""Brute-force dense network oracle, independent of the package solver.

Builds its own node list and branch stamps straight from the array
definition, folds zero-resistance wire segments by iterative label
propagation, and solves the Dirichlet system with hand-rolled
partially-pivoted Gaussian elimination (no linear-algebra library).
"""

import numpy as np

from nbbsim.crossbar import CrossbarArray, RailDrive, Topology


def gaussian_solve(a, b):
    """Solve a x = b by elimination with partial pivoting."""
    a = [row[:] for row in a]
    b = list(b)
    n = len(b)
    for k in range(n):
        piv = max(range(k, n), key=lambda r: abs(a[r][k]))
        if abs(a[piv][k]) == 0.0:
            raise ZeroDivisionError("singular matrix")
        a[k], a[piv] = a[piv], a[k]
        b[k], b[piv] = b[piv], b[k]
        for r in range(k + 1, n):
            f = a[r][k] / a[k][k]
            if f == 0.0:
                continue
            for c in range(k, n):
                a[r][c] -= f * a[k][c]
            b[r] -= f * b[k]
    x = [0.0] * n
    for k in range(n - 1, -1, -1):
        s = b[k] - sum(a[k][c] * x[c] for c in range(k + 1, n))
        x[k] = s / a[k][k]
    return x


def solve_dense(array: CrossbarArray, drive: RailDrive):
    """Column currents + conservation residual by direct dense elimination."""
    rows, cols = array.rows, array.cols
    rc = rows * cols

    # node labels: 0..rc-1 row-side, rc..2rc-1 col-side, then entries
    def rn(i, j):
        return i * cols + j

    def cn(i, j):
        return rc + i * cols + j

    def re(i):
        return 2 * rc + i

    def ce(j):
        return 2 * rc + rows + j

    n_raw = 2 * rc + rows + cols
    label = list(range(n_raw))

    def canon(x):
        while label[x] != x:
            x = label[x]
        return x

    def merge(x, y):
        label[canon(y)] = canon(x)

    r_w = array.r_wire_segment
    branches = []
    for i in range(rows):
        chain = [re(i)] + [rn(i, j) for j in range(cols)]
        for a, b in zip(chain, chain[1:]):
            if r_w == 0.0:
                merge(a, b)
            else:
                branches.append((a, b, 1.0 / r_w))
    for j in range(cols):
        chain = [ce(j)] + [cn(i, j) for i in range(rows)]
        for a, b in zip(chain, chain[1:]):
            if r_w == 0.0:
                merge(a, b)
            else:
                branches.append((a, b, 1.0 / r_w))

    gates = array.gates_on()
    for i in range(rows):
        for j in range(cols):
            if not gates[i, j]:
                continue
            r_cell = array.cells[i][j].resistance()
            if array.topology is Topology.ACTIVE_1T1R:
                r_cell += array.r_transistor_on
            branches.append((rn(i, j), cn(i, j), 1.0 / r_cell))

    nodes = sorted({canon(x) for x in range(n_raw)})
    idx = {r: k for k, r in enumerate(nodes)}
    n = len(nodes)

    fixed = {}
    for i, v in enumerate(drive.row_voltages):
        if v is not None:
            fixed[idx[canon(re(i))]] = v
    for j, v in enumerate(drive.col_voltages):
        if v is not None:
            fixed[idx[canon(ce(j))]] = v

    # components via repeated sweeps over branches (no union-find reuse)
    comp = list(range(n))
    changed = True
    while changed:
        changed = False
        for a, b, _ in branches:
            ka, kb = idx[canon(a)], idx[canon(b)]
            lo = min(comp[ka], comp[kb])
            if comp[ka] != lo or comp[kb] != lo:
                comp[ka] = comp[kb] = lo
                changed = True
        # propagate labels to a fixpoint
        for k in range(n):
            while comp[comp[k]] != comp[k]:
                comp[k] = comp[comp[k]]
    pinned_comps = {comp[k] for k in fixed}
    for k in range(n):
        if comp[k] not in pinned_comps:
            fixed[k] = 0.0
            pinned_comps.add(comp[k])

    lap = [[0.0] * n for _ in range(n)]
    for a, b, g in branches:
        ka, kb = idx[canon(a)], idx[canon(b)]
        lap[ka][ka] += g
        lap[kb][kb] += g
        lap[ka][kb] -= g
        lap[kb][ka] -= g

    unknown = [k for k in range(n) if k not in fixed]
    v = [0.0] * n
    for k, val in fixed.items():
        v[k] = val
    if unknown:
        a_uu = [[lap[r][c] for c in unknown] for r in unknown]
        rhs = [-sum(lap[r][c] * v[c] for c in fixed) for r in unknown]
        sol = gaussian_solve(a_uu, rhs)
        for k, val in zip(unknown, sol):
            v[k] = val

    injected = [sum(lap[r][c] * v[c] for c in range(n)) for r in range(n)]
    col_currents = np.zeros(cols)
    for j, vv in enumerate(drive.col_voltages):
        if vv is not None:
            col_currents[j] = -injected[idx[canon(ce(j))]]
    residual = sum(injected[k] for k in fixed)
    return col_currents, residual
