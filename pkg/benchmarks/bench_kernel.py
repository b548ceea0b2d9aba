"""Compiled vs pure-Python kernel: DP table construction and sampling walks.

    python benchmarks/bench_kernel.py [--sizes 8 12 16] [--draws 20000] [--repeat 3]

Both backends run the same layered constraint family and must agree on the
table totals and on the sampled sets; the script checks that before timing.
"""

from __future__ import annotations

import argparse
import random
import time
from fractions import Fraction

from tvdist import _backend
from tvdist.fpras import _tv_logs, contribution_bounds
from tvdist.instances import ProductDistribution, TvInstance, ln_fraction, normalize
from tvdist.twoterm import Engine, TwoTermLayers


def layered_family(n: int, seed: int):
    rng = random.Random(seed)
    p = [Fraction(rng.randint(500, 937), 1000) for _ in range(n)]
    q = [Fraction(rng.randint(1, int(a * 1000)), 1000) for a in p]
    inst, _ = normalize(TvInstance(ProductDistribution(p), ProductDistribution(q)))
    scheme = contribution_bounds(inst, Fraction(1, 10), tail_epsilon=Fraction(1, 10))
    x, _, z = _tv_logs(list(inst.p), list(inst.q))
    lp = sum(ln_fraction(a) for a in inst.p)
    lnA = scheme.ln_thresholds() - lp
    lnB = sum(ln_fraction(b) for b in inst.q) - lp
    return x, z, TwoTermLayers(lnA, lnB)


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16])
    ap.add_argument("--draws", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--grid", type=float, default=10.0)
    args = ap.parse_args()

    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled kernel not built; only the Python backend is available")
    print(f"{'n':>4} {'backend':>9} {'layers':>7} {'states':>10} {'build s':>9} {'draw s':>9} {'speedup':>8}")
    for n in args.sizes:
        x, z, layers = layered_family(n, seed=n)
        ref = None
        base = {}
        for name in reversed(backends):  # python first: it is the baseline
            tb, eng = best_of(lambda: Engine(x, z, layers, grid_factor=args.grid, backend=name), args.repeat)
            live = [j for j in range(layers.n_layers) if eng.totals[j] > 0]
            req = {j: args.draws // len(live) + 1 for j in live}
            td, drawn = best_of(lambda: eng.draw(req, 0, 12345, with_masks=True), args.repeat)
            states = sum(c.table.n_states for c in eng.classes if c.table is not None)
            sig = (eng.totals, {j: [int(m) for m in drawn[j][1]] for j in drawn})
            if ref is None:
                ref = sig
            elif sig != ref:
                raise SystemExit(f"backends disagree at n={n}")
            base.setdefault("t", tb + td)
            speed = base["t"] / (tb + td)
            print(f"{n:>4} {name:>9} {layers.n_layers:>7} {states:>10} {tb:>9.3f} {td:>9.3f} {speed:>7.1f}x")


if __name__ == "__main__":
    main()
