"""Smoke test for the chs_lab extension.

Build it first:  pip install --no-build-isolation -e crates/py
Then run:        python python/smoke_test.py   (or pytest python/)
"""

import json
import math

import chs_lab


def test_catalogue():
    names = [name for name, _ in chs_lab.experiments()]
    assert "prsg-td" in names and "pgm" in names
    keys = [p["name"] for p in chs_lab.schema("prsg-td")]
    assert keys[:4] == ["lam", "n", "ell", "t"]


def test_generator_distance():
    params = chs_lab.PrsParams(2, 3, 1, 1)
    report = chs_lab.prsg_td(params)
    assert report.all_passed, report.failed_checks()
    assert abs(report["td_rho_sigma"] - 7 / 48) < 1e-10
    assert report["td_rho_sigma"] <= report["td_step_sum"]
    assert json.loads(report.to_json())["experiment"] == "prsg-td"


def test_multikey_and_attack():
    assert chs_lab.multikey_td(chs_lab.PrsParams(2, 3, 1, 0, p=2)).all_passed
    attack = chs_lab.impossibility(chs_lab.PrsParams(1, 2, 1, 1))
    assert attack.all_passed
    assert attack["rank_rho1"] == 16


def test_pgm():
    guess = chs_lab.pgm_guess(chs_lab.PgmParams(1, 1))
    assert abs(guess["guess_prob"] - 2 / 3) < 1e-10
    bound = chs_lab.pgm_bound(chs_lab.PgmParams(2, 1))
    assert bound.all_passed
    assert bound["q"] <= bound["q_bound"]


def test_runner_and_sweep():
    report = chs_lab.run("commit-binding", {"adversary": "honest-0", "p": 2}, seed=5)
    assert report.all_passed
    assert abs(report["p0"] - 1.0) < 1e-9
    assert math.isclose(report["sum_binding_bound"], chs_lab.binding_bound(1, 2, 2))
    rows = chs_lab.sweep("pgm", "n", [1, 2, 40])
    assert [v for v, _, _ in rows] == ["1", "2", "40"]
    assert rows[0][1].all_passed and rows[2][1] is None and rows[2][2]


def test_errors_and_determinism():
    for bad in (lambda: chs_lab.PrsParams(3, 2, 1, 1), lambda: chs_lab.run("nope")):
        try:
            bad()
        except chs_lab.ChsError:
            pass
        else:
            raise AssertionError("expected ChsError")
    small = chs_lab.Budget(max_dense_dim=8)
    assert small.max_dense_dim == 8
    a = chs_lab.prsg_td_sampled(chs_lab.PrsParams(2, 3, 1, 1), trials=100, seed=9)
    b = chs_lab.prsg_td_sampled(chs_lab.PrsParams(2, 3, 1, 1), trials=100, seed=9)
    assert a.estimate and a.to_json() == b.to_json()


def test_acceptance_subset():
    rows = chs_lab.run_acceptance(only=[9, 10])
    assert [r["id"] for r in rows] == [9, 10]
    assert all(r["passed"] for r in rows), [r["line"] for r in rows]


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
