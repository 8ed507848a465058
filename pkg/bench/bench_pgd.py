"""Benchmark: compiled projected-gradient kernel vs the numpy fallback.

Runs the fixed-iteration kernel on the shipped case-study problem shape and
on a larger synthetic box-QP, checks both backends agree to 1e-12, and
prints the speedup. Usage: python bench/bench_pgd.py [--iters N]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from submhe import _pgd_fallback
from submhe.config import load_config
from submhe.mhe import build_problem

try:
    from submhe import _pgd
except ImportError:
    _pgd = None

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "case_study.json"


def case_study_instance():
    doc = load_config(CONFIG)
    sys = doc.system
    prob = build_problem(sys, doc.certificate, np.zeros(4),
                         np.zeros((5, 2)), np.zeros((5, 1)), 5, 10)
    s, c = prob.reduced_gradient_terms()
    alpha = 1.0 / np.linalg.eigvalsh(s)[-1]
    return "case-study window (dim 29)", s, c, prob.lower, prob.upper, alpha


def synthetic_instance(dim=60, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((dim, dim))
    s = m @ m.T / dim + 0.2 * np.eye(dim)
    c = rng.standard_normal(dim)
    lo, hi = -rng.random(dim), rng.random(dim)
    alpha = 1.0 / np.linalg.eigvalsh(s)[-1]
    return f"synthetic box-QP (dim {dim})", s, c, lo, hi, alpha


def run(kernel, s, c, lo, hi, alpha, iters):
    v0 = np.zeros(c.shape[0])
    t0 = time.perf_counter()
    out = kernel(s, c, lo, hi, v0, alpha, iters)
    return time.perf_counter() - t0, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iters", type=int, default=200_000)
    args = parser.parse_args()

    print(f"{args.iters} projected-gradient iterations per instance\n")
    print(f"{'instance':34s} {'numpy':>10s} {'cython':>10s} {'speedup':>9s}")
    for name, s, c, lo, hi, alpha in (case_study_instance(),
                                      synthetic_instance()):
        t_py, v_py = run(_pgd_fallback.run_pgd, s, c, lo, hi, alpha=alpha,
                         iters=args.iters)
        if _pgd is None:
            print(f"{name:34s} {t_py:9.3f}s   (compiled kernel not built)")
            continue
        t_cy, v_cy = run(_pgd.run_pgd, s, c, lo, hi, alpha=alpha,
                         iters=args.iters)
        assert np.allclose(v_py, v_cy, atol=1e-12), "backends disagree"
        print(f"{name:34s} {t_py:9.3f}s {t_cy:9.3f}s {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
