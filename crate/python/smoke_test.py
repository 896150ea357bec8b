"""Smoke test for the `ddpp` extension module.

Build and run from the repository root:

    cargo build --release -p ddpp-bindings --features extension-module
    cp target/release/libddpp.so python/ddpp.so
    python3 python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import ddpp  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    inst = ddpp.Instance.load(os.path.join(ROOT, "data", "table7", "n4.inst"))
    assert (inst.num_drones, inst.num_deliveries) == (10, 4)
    print(inst, "conflicts:", inst.conflicts())

    exact = ddpp.solve_exact(inst)
    assert exact["min_drones"] == 3 and exact["min_h0"] == 10.0, exact
    print("exact:", exact)

    q1 = ddpp.build(inst, formulation=1)
    q2 = ddpp.build(inst, formulation=2)
    assert q1.num_variables > q2.num_variables
    print(q1, q2)

    rows = [[j in part for j in range(inst.num_deliveries)] for part in exact["min_h0_partition"]]
    rows += [[False] * inst.num_deliveries] * (inst.num_drones - len(rows))
    assert ddpp.feasibility(inst, rows) == (True, True, True)
    assert ddpp.evaluate_h0(inst, rows) == 10.0

    samples = ddpp.anneal(q2, reads=50, sweeps=200, seed=3)
    again = ddpp.anneal(q2, reads=50, sweeps=200, seed=3)
    assert [s.bits for s in samples] == [s.bits for s in again]
    best = samples[0]
    assert all(best.energy <= s.energy for s in samples)
    decoded = q2.decode(best.bits)
    print("best read", best.read, "energy", best.energy, "triplet", ddpp.feasibility(inst, decoded))

    tiny = ddpp.Instance(2, 5.0, [2.0, 3.0], [[8, 9], [10, 11]], label="tiny")
    model = ddpp.build(tiny)
    bits, energy = ddpp.brute_force(model)
    assert ddpp.feasibility(tiny, model.decode(bits)) == (True, True, True)
    assert abs(model.energy(bits) - energy) < 1e-9

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        assert ddpp.Model.load(path).num_variables == model.num_variables
        assert json.loads(model.to_json())["variables"] == model.variables

    report = ddpp.benchmark(tiny, reads=20, sweeps=100, runs=2, seed=1)
    assert len(report["runs"]) == 2
    print("benchmark best H0:", report["solution_best"])

    try:
        ddpp.Instance(1, 5.0, [5.0], [[8, 9]])
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("cost equal to the budget was accepted")

    try:
        ddpp.brute_force(q2)
    except ddpp.DdppError as e:
        print("rejected:", e)
    else:
        raise AssertionError("brute force accepted a large model")

    print("smoke test passed")


if __name__ == "__main__":
    main()
