"""Pure-Python/numpy versions of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature and bit-identical results; ``kernels`` picks one at import.
"""
import numpy as np


def mc_wins(own_level, opp_levels, tie_u):
    """Win indicator for a fixed bidder against sampled opponents.

    ``opp_levels`` is ``(trials, n-1)`` virtual-valuation ranks; ``tie_u`` are
    uniforms on [0, 1) used to split ties among the minimal bidders.
    """
    opp_levels = np.asarray(opp_levels, dtype=np.int64)
    trials = opp_levels.shape[0]
    if opp_levels.shape[1] == 0:
        return np.ones(trials, dtype=np.uint8)
    best = opp_levels.min(axis=1)
    ties = (opp_levels == own_level).sum(axis=1)
    pick = np.floor(np.asarray(tie_u) * (ties + 1)).astype(np.int64)
    win = (own_level < best) | ((own_level == best) & (pick == 0))
    return win.astype(np.uint8)


def advance(x, y, vx, vy, dt, width, height):
    """Move nodes by ``dt`` in place, reflecting specularly at the arena walls."""
    for pos, vel, size in ((x, vx, width), (y, vy, height)):
        pos += vel * dt
        k = np.floor(pos / size)
        rem = np.clip(pos - k * size, 0.0, size)
        odd = np.mod(k, 2.0) != 0.0
        # an odd number of wall hits reverses the velocity component
        pos[:] = np.where(odd, size - rem, rem)
        vel[odd] = -vel[odd]


def link_durations(x, y, vx, vy, r):
    """Pairwise link expiration times; NaN where nodes are out of range, inf for zero relative velocity."""
    n = x.shape[0]
    b = x[:, None] - x[None, :]
    d = y[:, None] - y[None, :]
    a = vx[:, None] - vx[None, :]
    c = vy[:, None] - vy[None, :]
    out = np.full((n, n), np.nan)
    inrange = b * b + d * d <= r * r
    speed2 = a * a + c * c
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = speed2 * r * r - (a * d - b * c) ** 2
        let = (-(a * b + c * d) + np.sqrt(np.maximum(disc, 0.0))) / speed2
    let = np.maximum(let, 0.0)
    out[inrange] = let[inrange]
    out[inrange & (speed2 == 0.0)] = np.inf
    np.fill_diagonal(out, np.inf)
    return out
