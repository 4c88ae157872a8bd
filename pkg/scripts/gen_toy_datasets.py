#!/usr/bin/env python3
"""Regenerate the bundled toy pool CSVs.

Both pools plant a known near-optimal row so tests can pin the pool
optimum. toy_sphere is all-numeric with an interior optimum; toy_gear is
mixed numeric/symbolic with monotone objectives, so its optimum sits at
the feature extremes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "src" / "warmstart_lab" / "data" / "datasets"


def gen_toy_sphere() -> None:
    rng = np.random.default_rng(20240601)
    rows = []
    for _ in range(63):
        x = np.round(rng.uniform(-1.0, 1.0, size=5), 3)
        rows.append(x)
    rows.append(np.array([0.02, -0.03, 0.01, 0.04, -0.02]))  # near the dist2 optimum
    header = ["x1", "x2", "x3", "x4", "x5", "Dist2-", "Skew-"]
    with (OUT / "toy_sphere.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x in rows:
            dist2 = round(float((x**2).sum()), 4)
            skew = round(float(((x - 0.4) ** 2).sum()), 4)
            writer.writerow([f"{v:g}" for v in x] + [f"{dist2:g}", f"{skew:g}"])


def gen_toy_gear() -> None:
    rng = np.random.default_rng(77)
    compilers = ["gcc", "clang", "icc"]
    opt_levels = ["O0", "O1", "O2", "O3"]
    comp_penalty = {"gcc": 30.0, "clang": 5.0, "icc": 15.0}
    opt_penalty = {"O0": 60.0, "O1": 35.0, "O2": 15.0, "O3": 5.0}

    rows = []
    for _ in range(47):
        threads = int(rng.choice([2, 4, 8, 16, 32]))
        cache_mb = int(rng.integers(16, 257))
        buffer_kb = int(rng.integers(8, 513))
        prefetch = round(float(rng.uniform(0.0, 0.9)), 3)
        compiler = str(rng.choice(compilers))
        opt_level = str(rng.choice(opt_levels))
        rows.append((threads, cache_mb, buffer_kb, prefetch, compiler, opt_level))
    rows.append((64, 512, 1024, 0.98, "clang", "O3"))  # planted optimum

    header = [
        "threads",
        "cache_mb",
        "buffer_kb",
        "prefetch",
        "compiler",
        "opt_level",
        "Latency-",
        "Throughput+",
    ]
    with (OUT / "toy_gear.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for threads, cache_mb, buffer_kb, prefetch, compiler, opt_level in rows:
            noise = float(rng.uniform(-2.0, 2.0))
            latency = (
                900.0 / threads
                + 8000.0 / cache_mb
                + 3000.0 / buffer_kb
                + 40.0 * (1.0 - prefetch)
                + comp_penalty[compiler]
                + opt_penalty[opt_level]
                + noise
            )
            throughput = (
                50.0 * np.log2(threads)
                + cache_mb / 8.0
                + buffer_kb / 16.0
                + 30.0 * prefetch
                + (40.0 - comp_penalty[compiler])
                + (70.0 - opt_penalty[opt_level])
                + noise
            )
            writer.writerow(
                [
                    threads,
                    cache_mb,
                    buffer_kb,
                    f"{prefetch:g}",
                    compiler,
                    opt_level,
                    f"{latency:.3f}",
                    f"{throughput:.3f}",
                ]
            )


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    gen_toy_sphere()
    gen_toy_gear()
    print(f"wrote toy pools to {OUT}")
