"""Pure-numpy projected-gradient kernel, used when the extension is absent."""

import numpy as np


def run_pgd(s, g, lo, hi, v0, alpha, iters):
    """Iterate v <- clip(v - alpha * (S v + g), lo, hi) exactly `iters` times."""
    v = np.array(v0, dtype=float)
    for _ in range(int(iters)):
        v = np.clip(v - alpha * (s @ v + g), lo, hi)
    return v
