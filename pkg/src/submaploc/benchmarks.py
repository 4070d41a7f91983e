"""Wall-time comparison of the compiled and pure-numpy kernel backends.

Both backends implement the same three kernels (ray carving, the pairwise
consistency matrix, hypothesis inlier counting) with bit-identical outputs;
this module times them on representative workloads and double-checks the
equality while it is at it.
"""

from __future__ import annotations

import time

import numpy as np

from ._backend import BACKEND, get_kernels


def _time_call(fn, *args, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def benchmark_kernels(seed: int = 0, repeats: int = 5) -> dict:
    """Per-kernel best-of-N times for each available backend.

    Returns a dict with per-kernel millisecond timings keyed by backend
    name, an ``outputs_match`` flag (bit-level agreement on the benchmark
    inputs), and the name of the backend the package selected at import.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)

    origin = np.array([0.0, 0.0, 1.5])
    points = rng.uniform(-30.0, 30.0, (4096, 3))
    qa = rng.uniform(-20.0, 20.0, (256, 3))
    qp = rng.uniform(-20.0, 20.0, (256, 3))
    rotations = np.tile(np.eye(3), (512, 1, 1))
    translations = rng.uniform(-5.0, 5.0, (512, 3))

    backends = {"python": get_kernels("python")}
    try:
        backends["compiled"] = get_kernels("compiled")
    except ImportError:
        pass

    report: dict = {"active_backend": BACKEND, "repeats": repeats,
                    "kernels": {}, "outputs_match": True}
    workloads = {
        "ray_carve": (origin, points, 0.2, 60.0),
        "consistency_matrix": (qa, qp, 0.5),
        "count_inliers": (qa, qp, rotations, translations, 0.6),
    }
    for kernel_name, args in workloads.items():
        times = {}
        outputs = {}
        for backend_name, mod in backends.items():
            fn = getattr(mod, kernel_name)
            outputs[backend_name] = fn(*args)
            times[backend_name] = _time_call(fn, *args, repeats=repeats) * 1e3
        if len(outputs) == 2:
            a, b = outputs["python"], outputs["compiled"]
            if isinstance(a, tuple):
                match = all(np.array_equal(x, y) for x, y in zip(a, b))
            else:
                match = np.array_equal(a, b)
            report["outputs_match"] = report["outputs_match"] and bool(match)
        entry = {f"{name}_ms": t for name, t in times.items()}
        if "compiled" in times and times["compiled"] > 0:
            entry["python_over_compiled"] = times["python"] / times["compiled"]
        report["kernels"][kernel_name] = entry
    return report
