"""Smoke test for the `cstm` extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
"""

import math

import cstm


def main():
    m = cstm.Model.builtin()
    assert m.strategies == ["Standard of care", "Strategy A", "Strategy B", "Strategy AB"], m.strategies

    labels, arr = m.transition_array("Standard of care")
    assert labels == ["H", "S1", "S2", "D"]
    assert len(arr) == 75
    for row in arr[0]:
        assert abs(sum(row) - 1.0) < 1e-12

    soc = m.evaluate("Standard of care")
    assert len(soc.trace) == 76
    assert soc.survival[0] == 1.0
    assert 41.0 < soc.life_expectancy < 41.5, soc.life_expectancy
    assert set(soc.prevalence) == {"S1", "S2", "S1_S2"}

    tunnels = m.evaluate("Strategy B", variant="tunnels")
    assert tunnels.labels == ["H", "S1", "S2", "D"]

    totals = {name: (cost, qaly) for name, cost, qaly in m.totals()}
    assert totals["Strategy AB"][1] > totals["Standard of care"][1]

    status = {r["strategy"]: r["status"] for r in m.cea()}
    assert status == {"Standard of care": "ND", "Strategy B": "ND", "Strategy AB": "ND", "Strategy A": "D"}

    rows = cstm.calculate_icers([0.0, 10.0, 30.0], [0.0, 1.0, 4.0], ["a", "b", "c"])
    assert [r["status"] for r in rows] == ["ND", "ND", "ED"]

    cheap = m.with_parameters({"c_trtB": 0.0})
    assert cheap.totals()[2][1] < totals["Strategy B"][0]

    psa = m.psa(50, seed=3)
    again = m.psa(50, seed=3)
    assert len(psa) == 50
    assert psa.costs == again.costs
    curves = psa.curves(0.0, 200_000.0, 10_000.0)
    assert len(curves["wtp"]) == 21
    assert all(e >= 0.0 for e in curves["evpi"])
    assert curves["ceaf"][0] == "Standard of care"

    p = cstm.prob_from_rate(0.1)
    assert math.isclose(cstm.rate_from_prob(p), 0.1, rel_tol=1e-12)

    try:
        m.evaluate("Strategy Z")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown strategy accepted")

    print("ok:", soc)


if __name__ == "__main__":
    main()
