"""Compiled vs pure-Python kernels: rollout with sensitivities, tube tracking, one FHOCP solve.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import time
import warnings
from unittest import mock

import numpy as np

from mitlnav import fhocp, kernels
from mitlnav.dynamics import paper_model
from mitlnav.navigator import leg_setup
from mitlnav.scenario import load_scenario


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not kernels.HAVE_COMPILED:
        print("compiled extension not available; only the Python backend can run")
    warnings.simplefilter("ignore")
    m = paper_model()
    rng = np.random.default_rng(0)
    U = rng.uniform(-1.5, 1.5, (12, 2))
    x0 = np.array([-2.4, 2.6, 0.0, 0.0])
    Q, R = np.eye(4), 0.5 * np.eye(2)
    D = rng.uniform(-0.1, 0.1, (10, 2))
    lo, hi = m.input_box.lower, m.input_box.upper

    sc = load_scenario("paper_s5")
    gains, cfg = sc.design(), sc.fhocp_config()
    ts, term = leg_setup(sc, sc.model, gains, cfg, "R1", "R3")
    xi0 = np.concatenate([sc.rois["R1"].center - term.chi_d, np.zeros(2)])

    def solve_with(backend):
        real = kernels.rollout

        def forced(*a, **k):
            k["backend"] = backend
            return real(*a, **k)

        with mock.patch.object(kernels, "rollout", forced):
            fhocp.solve(sc.model, cfg, ts, xi0, term, hard_terminal=False)

    cases = {
        "rollout (N=12, 10 substeps, sensitivities)":
            lambda b: kernels.rollout(m, x0, [2.4, 2.6], U, [0.0, 0.0], 0.01, 10, Q, R, backend=b),
        "track (1 sampling period)":
            lambda b: kernels.track(m, x0, x0, [0.2, 0.1], 59.125, lo, hi, D, 0.01, backend=b),
        "FHOCP solve R1->R3 (first step)": solve_with,
    }
    backends = ["python"] + (["compiled"] if kernels.HAVE_COMPILED else [])
    print(f"{'case':46s}" + "".join(f"{b:>14s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases.items():
        rep = max(1, args.repeat // 10) if name.startswith("FHOCP") else args.repeat
        t = {b: best_of(lambda: fn(b), rep) for b in backends}
        row = f"{name:46s}" + "".join(f"{t[b] * 1e3:12.3f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{t['python'] / t['compiled']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
