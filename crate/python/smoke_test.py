"""Smoke test for the `rationing` extension module.

Build and run from the repository root:

    cargo build -p rationing-py --features extension-module --release
    cp target/release/librationing.so python/rationing.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import rationing  # noqa: E402


def main():
    gamma = rationing.priority_factors({"A": 2, "B": 4, "C": 3, "D": 1})
    assert math.isclose(sum(gamma.values()), 1.0)
    assert gamma["D"] > gamma["A"] > gamma["C"] > gamma["B"]

    assert rationing.service_factor([True, False, False], [True, True, False]) == 0.5

    real, virt = rationing.recharge_schedule(0.7, 5, 30, 11.19)
    assert len(real) == 30 and math.isclose(sum(real), 0.7 * 11.19)
    assert math.isclose(sum(virt), sum(real))

    thr = rationing.fixed_thresholds({"A": 2, "B": 4, "C": 3, "D": 1}, 7.833)
    assert math.isclose(thr["B"], 4 / 4 * 0.05 * 7.833)

    traces = rationing.synthesize(days=2)
    assert sorted(traces) == ["A", "B", "C", "D"]
    assert all(len(p) == 192 for p in traces.values())

    assert rationing.oracle_check(n=20) == 20

    out = rationing.run_experiment("optimal", amount=0.7, frequency=5)
    report = out["report"]
    assert report["disconnection_count"] == 0
    assert abs(report["total_energy_fraction"] - 0.70) <= 0.01
    print(f"optimal psf {report['psf']:.4f}, full cost ${out['full_cost']:.2f}")

    rows = rationing.sweep(["baseline", "fixed"], [0.6, 0.8], [1, 5], days=10)
    assert len(rows) == 8 and all(r["error"] is None for r in rows)

    try:
        rationing.run_experiment("greedy")
    except ValueError as e:
        print(f"rejected bad policy: {e}")
    else:
        raise AssertionError("bad policy accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
