"""Time the compiled kernels against the numpy fallback on representative workloads.

    python3 benchmarks/compare_backends.py [--repeats N]
"""

import argparse

from qlab import bench, kernels


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if "cython" not in kernels.available():
        print("compiled kernels are not built; only the numpy fallback will be timed")
    print(bench.format_backends(bench.compare_backends(args.repeats, args.seed)))


if __name__ == "__main__":
    main()
