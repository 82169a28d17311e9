"""Smoke test for the fml extension module.

Build it first, e.g. `maturin develop --release -m crates/py/Cargo.toml`.
"""

import json
import math

import fml


def main():
    s = fml.System.adic(1, "7", 6)
    assert s.depth == 6 and s.dim == 1
    assert s.alpha(1) == 1 / 7

    rep = s.validate()
    assert all(c["passed"] for c in rep["checks"]), rep["checks"]

    m = s.measure(1.0)
    audit = m.conservation()
    assert audit["max_relative_error"] < 1e-12, audit

    whole = m.ball_mass([0.5], 1.0)
    assert abs(whole["exact"] - 1.0) < 1e-12, whole

    # Lebesgue on a constant base: survivors keep (1 - 1/7)^n of the mass.
    leb = s.measure(0.0)
    assert abs(leb.survivor_mass(4) - (6 / 7) ** 4) < 1e-12

    ft = s.measure("thin").fat_thin()
    assert ft["verdict"] == "collapse", ft["verdict"]
    assert ft["consistent"] is True

    scan = m.doubling_scan(samples=50, seed=7)
    assert len(scan["samples"]) == 50
    assert all(math.isfinite(x["ratio"]) for x in scan["samples"])

    again = fml.System.from_json(s.to_json())
    assert json.loads(again.to_json()) == json.loads(s.to_json())

    carpet = fml.System.distorted_carpet("odd:2n+1", 4)
    r = carpet.measure(0.0).restricted_scan(samples=10)
    assert r["min_ratio"] > 0

    g = fml.System.subsampled(1, "geometric:0.5", 8)
    ft = g.measure("fat").fat_thin()
    assert ft["verdict"] == "positive-limit", ft["verdict"]

    try:
        s.measure("sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("bad rho accepted")

    print("ok")


if __name__ == "__main__":
    main()
