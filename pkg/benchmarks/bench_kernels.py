"""Throughput of the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Both backends consume identical draws, so the runs are also checked for
bit-identical output.
"""

import argparse
import time

import numpy as np

from markov_billiard import _kernels
from markov_billiard.billiard import BilliardState, simulate_billiard
from markov_billiard.chain import ChainState, boundary_excursions, build_chain, simulate_chain
from markov_billiard.reflection import NoiselessLaw, NoisyLaw, NoisyLawParams
from markov_billiard.rng import stream


def _chain(backend, events):
    spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
    run = simulate_chain(spec, ChainState(8, 0.5), events, stream(1, 0, "bench"),
                         backend=backend)
    return run.occupancy


def _noisy_chain(backend, events):
    spec = build_chain(16, [0.7, 0.3], [0.6, 0.4], "noisy", 0.5)
    run = simulate_chain(spec, ChainState(8, 0.5), events, stream(2, 0, "bench"),
                         backend=backend)
    return run.occupancy


def _excursions(backend, events):
    spec = build_chain(1000, [0.4, 0.3, 0.2, 0.1], "hard")
    batch = boundary_excursions(spec, -1.0, events // 4, stream(3, 0, "bench"),
                                backend=backend)
    return batch.exit_velocities


def _billiard(backend, events):
    laws = (NoiselessLaw([0.4, 0.3, 0.2, 0.1]), NoisyLaw(NoisyLawParams.from_layer(0.3, 0.5)))
    run = simulate_billiard(BilliardState(0.5, -1.0), laws, events, stream(4, 0, "bench"),
                            backend=backend)
    return run.trajectory.R


CASES = {
    "chain (noiseless)": _chain,
    "chain (noisy)": _noisy_chain,
    "layer excursions": _excursions,
    "billiard": _billiard,
}


def _best(fn, backend, events, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(backend, events)
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--events", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; only the Python backend is timed")
    print(f"{'case':<20}" + "".join(f"{b + ' [s]':>16}" for b in backends) + f"{'speedup':>10}"
          + f"{'identical':>11}")
    for name, fn in CASES.items():
        results = {b: _best(fn, b, args.events, args.repeat) for b in backends}
        line = f"{name:<20}" + "".join(f"{results[b][0]:>16.4f}" for b in backends)
        if len(backends) == 2:
            speedup = results["python"][0] / results["compiled"][0]
            same = np.array_equal(results["python"][1], results["compiled"][1])
            line += f"{speedup:>10.1f}{str(same):>11}"
        print(line)


if __name__ == "__main__":
    main()
