"""Counter-only model of the L1 -> L2 -> delete cascade (no embeddings, no index)."""

import math


def simulate_pruned(n: int, l1: int, l2: int, fraction: float) -> tuple[int, int, int]:
    """Return ``(live_l1, live_l2, pruned)`` after ingesting ``n`` items."""
    b1 = math.ceil(round(l1 * fraction, 9))
    b2 = math.ceil(round(l2 * fraction, 9))
    c1 = c2 = pruned = 0
    for _ in range(n):
        if c1 >= l1:
            c1 -= b1
            for _ in range(b1):
                if c2 >= l2:
                    c2 -= b2
                    pruned += b2
                c2 += 1
        c1 += 1
    return c1, c2, pruned
