"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same tie-breaking, so results
agree bit-for-bit on identical inputs.
"""
import numpy as np

FEAS_TOL = 1e-9


def _group_hull(values, costs, mask_row):
    idx = [j for j in range(len(values)) if mask_row[j]]
    # cost ascending, value descending, index ascending
    idx.sort(key=lambda j: (costs[j], -values[j], j))
    front = []
    best = -np.inf
    for j in idx:
        if values[j] > best:
            front.append(j)
            best = values[j]
    hull = []
    for j in front:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (costs[b] - costs[a]) * (values[j] - values[a]) - (values[b] - values[a]) * (
                costs[j] - costs[a]
            )
            if cross >= 0.0:
                hull.pop()
            else:
                break
        hull.append(j)
    return hull


def relaxed_mckp(values, costs, mask, budget):
    """Maximize sum(values * w) over per-group simplices with one knapsack row.

    Returns ``(weights, status, min_cost)``; ``status`` is 0 on success and 1
    when even the cheapest item of every group exceeds the budget.
    """
    values = np.asarray(values, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    n_groups, n_items = values.shape
    weights = np.zeros((n_groups, n_items))

    min_cost = 0.0
    max_cost = 0.0
    for g in range(n_groups):
        row = costs[g][mask[g]]
        min_cost += row.min()
        max_cost += row.max()
    if min_cost > budget + FEAS_TOL:
        return weights, 1, min_cost

    if budget >= max_cost:
        for g in range(n_groups):
            best_j = -1
            for j in range(n_items):
                if mask[g, j] and (best_j < 0 or values[g, j] > values[g, best_j]):
                    best_j = j
            weights[g, best_j] = 1.0
        return weights, 0, min_cost

    hulls = []
    current = []
    base = 0.0
    upgrades = []
    for g in range(n_groups):
        hull = _group_hull(values[g], costs[g], mask[g])
        hulls.append(hull)
        current.append(0)
        base += costs[g, hull[0]]
        for k in range(len(hull) - 1):
            a, b = hull[k], hull[k + 1]
            dc = costs[g, b] - costs[g, a]
            dv = values[g, b] - values[g, a]
            upgrades.append((-(dv / dc), g, k, dc))
    upgrades.sort(key=lambda u: (u[0], u[1], u[2]))

    remaining = budget - base
    frac_group = -1
    frac = 0.0
    for _, g, k, dc in upgrades:
        if dc <= remaining:
            current[g] = k + 1
            remaining -= dc
        else:
            if remaining > 0.0:
                frac_group = g
                frac = remaining / dc
            break

    for g in range(n_groups):
        hull = hulls[g]
        j = hull[current[g]]
        if g == frac_group:
            weights[g, j] = 1.0 - frac
            weights[g, hull[current[g] + 1]] = frac
        else:
            weights[g, j] = 1.0
    return weights, 0, min_cost


def prefix_gather_sum(depth, config, table):
    """Per-row sum of ``table[s, b, config[n, s, b]]`` over the first ``depth[n, s]`` blocks."""
    depth = np.asarray(depth, dtype=np.int64)
    config = np.asarray(config, dtype=np.int64)
    table = np.asarray(table, dtype=np.float64)
    n_rows, n_stages = depth.shape
    out = np.zeros(n_rows)
    # same accumulation order as the compiled loop: blocks into a stage total, stages into the row
    for s in range(n_stages):
        stage = np.zeros(n_rows)
        for b in range(table.shape[1]):
            active = depth[:, s] > b
            if not active.any():
                continue
            picked = table[s, b, np.where(active, config[:, s, b], 0)]
            stage += np.where(active, picked, 0.0)
        out += stage
    return out
