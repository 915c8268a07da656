"""Smoke test for the Python bindings. Run after `maturin develop` or with the
built extension on PYTHONPATH."""

import math
import random

import linsel_py as ls


def identity(n, scale=1.0):
    return [[scale if i == j else 0.0 for j in range(n)] for i in range(n)]


def main():
    p = 40
    model = ls.LinearModel.denoising(p, 1.0)
    assert (model.n, model.p) == (p, p)
    k = ls.reconstructor_full_rank(model.x)
    family = ls.gaussian_bank(p, 20)
    table = ls.calibrate(model, family, k)
    assert len(table) == 20
    assert all(math.isfinite(v) for v in table.penalties())
    assert table.penalty(family[3].id) == table.penalties()[3]

    beta = ls.test_signal(p)
    rng = random.Random(1)
    y = model.observe(beta, [rng.gauss(0.0, 1.0) for _ in range(p)])
    sel = ls.select(y, model, family, table, k)
    assert sel.chosen == family[sel.index].id
    assert len(sel.estimate) == p
    assert sel.criterion[sel.index] == min(sel.criterion)

    rep = ls.risk_report(model, family, table, beta, 50, 7, k)
    assert rep["rho"] >= 0.5 and rep["oracle_risk"] > 0.0

    x = [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 1.0]]
    cert = ls.check_identifiability(x, [])
    assert not cert["identifiable"] and cert["augmented_rank"] == 2
    rec = ls.reconstructor_basis(x, [[1.0, -1.0, 0.0]])
    assert len(rec.k) == 3
    try:
        ls.reconstructor_full_rank(x)
    except ValueError as e:
        assert "rank" in str(e)
    else:
        raise AssertionError("rank-deficient design accepted")

    pinv = ls.pseudo_inverse([[1.0, 2.0], [2.0, 4.0]])
    assert abs(pinv[0][0] - 0.04) < 1e-12

    est = ls.Estimator("half", identity(3, 0.5))
    assert est.apply([2.0, 4.0, 6.0]) == [1.0, 2.0, 3.0]
    small = ls.LinearModel(identity(3), identity(3, 0.1))
    assert abs(ls.quadratic_risk(small, est, [0.0, 0.0, 0.0]) - 3 * 0.05 ** 2) < 1e-12

    out = ls.run_experiment("smoothing", p=40, models=10, trials=10, seed=3)
    assert out["rho"] >= 0.5
    print("smoke test ok:", out["summary"])


if __name__ == "__main__":
    main()
