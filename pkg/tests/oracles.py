"""Independent oracles used to freeze expected values.

Everything here deliberately avoids the library's solver paths: BFS uses
only multiplication and equality, the distance-chain Green values come
from a dense solve of a birth-death reduction, and step distributions
are enumerated path by path.
"""

from __future__ import annotations

import itertools

import numpy as np


def bfs_distances(model, radius: int) -> dict:
    """Word-metric distances from e by plain BFS over generator products."""
    gens = model.generators()
    dist = {model.identity(): 0}
    frontier = [model.identity()]
    for layer in range(1, radius + 1):
        nxt = []
        for x in frontier:
            for s in gens:
                y = x * s
                if y not in dist:
                    dist[y] = layer
                    nxt.append(y)
        frontier = nxt
    return dist


def free_ball_size(n_rank: int, radius: int) -> int:
    """1 + 2N((2N-1)^r - 1)/(2N-2) closed form for the free group."""
    if radius == 0:
        return 1
    q = 2 * n_rank - 1
    return 1 + 2 * n_rank * (q**radius - 1) // (q - 1)


def distance_chain_green(n_rank: int, radius: int) -> np.ndarray:
    """Restricted Green values for the simple walk on F_N via the distance
    chain: expected visits to each sphere before leaving B(e, radius),
    divided by sphere sizes.

    The distance process is a birth-death chain: from 0 the walk moves to
    1; from k >= 1 it moves out with probability (2N-1)/2N and in with
    1/2N.  Returns per-element values G_B(e, y) indexed by |y|.
    """
    q = 2 * n_rank
    up, down = (q - 1) / q, 1.0 / q
    m = radius + 1
    P = np.zeros((m, m))
    P[0, 1] = 1.0
    for k in range(1, m):
        if k + 1 < m:
            P[k, k + 1] = up
        P[k, k - 1] = down
    visits = np.linalg.solve(np.eye(m) - P.T, np.eye(m)[0])
    sphere = np.array([1] + [2 * n_rank * (2 * n_rank - 1) ** (k - 1) for k in range(1, m)])
    return visits / sphere


def brute_step_distribution(model, support, n: int) -> dict:
    """Exact n-step distribution by enumerating all |support|^n paths."""
    out = {}
    for combo in itertools.product(range(len(support)), repeat=n):
        g = model.identity()
        p = 1.0
        for i in combo:
            g = g * support[i][0]
            p *= support[i][1]
        out[g] = out.get(g, 0.0) + p
    return out


def cone_measure(n_rank: int, depth: int) -> float:
    """Harmonic measure of the cone below a reduced word of given length,
    for the simple walk on F_N.

    At any vertex the exit ray picks each of the 2N branch classes with
    equal probability (vertex-fixing automorphisms permute them), and
    reaching the cone root first costs the known first-passage value
    (2N-1)^(-depth); the cone collects the 2N-1 forward branches.
    """
    q = 2 * n_rank
    return (q - 1) / q * (q - 1) ** (-depth)


def binomial_band(p: float, n: int, sigmas: float = 4.0) -> float:
    return sigmas * np.sqrt(p * (1 - p) / n)
