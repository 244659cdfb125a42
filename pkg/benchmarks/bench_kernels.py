"""Compare the compiled kernel core against the numpy fallback.

The workloads mirror how the toolkit actually spends time: huge numbers
of tiny single-instance forward/gradient passes (coalition sweeps,
integration paths, counterfactual descent steps, finite-difference
oracles). Each backend runs in a subprocess so the import-time selection
(XATTR_KERNELS) applies cleanly.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json
import time

import numpy as np

import xattrib
from xattrib import Conv2D, Dense, Flatten, MaxPool2D, Network
from xattrib.network import forward, input_gradient, predict

REPEATS = %(repeats)d


def bench(fn, n):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - start) / n * 1e6  # us per call


rng = np.random.default_rng(0)
mlp = Network(
    [Dense(rng.normal(0, 0.5, (32, 8)), rng.normal(0, 0.2, 32), "tanh"),
     Dense(rng.normal(0, 0.5, (16, 32)), rng.normal(0, 0.2, 16), "tanh"),
     Dense(rng.normal(0, 0.5, (2, 16)), np.zeros(2), "softmax")],
    input_shape=(8,),
)
x_mlp = rng.normal(size=8)

conv = Network(
    [Conv2D(rng.normal(0, 0.5, (4, 1, 3, 3)), padding="same"),
     MaxPool2D(2),
     Conv2D(rng.normal(0, 0.5, (4, 4, 3, 3)), padding="valid"),
     Flatten(),
     Dense(rng.normal(0, 0.5, (2, 4 * 4 * 4)), np.zeros(2), "sigmoid")],
    input_shape=(1, 12, 12),
)
x_conv = rng.normal(size=(1, 12, 12))

results = {
    "backend": xattrib.kernel_backend,
    "mlp_forward_us": bench(lambda: predict(mlp, x_mlp), REPEATS),
    "mlp_gradient_us": bench(lambda: input_gradient(mlp, x_mlp, 0),
                             REPEATS),
    "conv_forward_us": bench(lambda: predict(conv, x_conv),
                             max(REPEATS // 5, 1)),
    "conv_gradient_us": bench(lambda: input_gradient(conv, x_conv, 0),
                              max(REPEATS // 5, 1)),
}
print(json.dumps(results))
"""


def run_backend(backend, repeats):
    env = dict(os.environ, XATTR_KERNELS=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER % {"repeats": repeats}],
        capture_output=True, text=True, env=env, check=False,
    )
    if proc.returncode != 0:
        raise SystemExit(
            f"{backend} worker failed:\n{proc.stderr.strip()}"
        )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    rows = []
    for backend in ("pure", "compiled"):
        try:
            rows.append(run_backend(backend, args.repeats))
        except SystemExit as exc:
            print(f"skipping {backend}: {exc}")
    if not rows:
        raise SystemExit("no backend produced results")
    keys = ["mlp_forward_us", "mlp_gradient_us", "conv_forward_us",
            "conv_gradient_us"]
    header = f"{'workload':<18}" + "".join(
        f"{r['backend']:>12}" for r in rows
    )
    if len(rows) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for key in keys:
        line = f"{key[:-3]:<18}" + "".join(
            f"{r[key]:>10.1f}us" for r in rows
        )
        if len(rows) == 2:
            line += f"{rows[0][key] / rows[1][key]:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
