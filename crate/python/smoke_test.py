"""Smoke test for the svelab_py extension module.

Build and install first:  maturin build --release -m crates/python/Cargo.toml
and `pip install` the wheel it prints, then run this script.
"""

import math

import numpy as np
import svelab_py as sv


def main() -> None:
    assert abs(sv.kappa(0.5) - 1 / math.sqrt(2)) < 1e-12

    dw = sv.brownian(seed=7, path=0, m=1, steps=1024)
    assert dw.shape == (1024, 1)
    assert np.array_equal(dw, sv.brownian(seed=7, path=0, m=1, steps=1024))
    assert abs(dw.var() * 1024 - 1.0) < 0.2

    model = sv.Model({"x0": [0.0], "drift": {"family": "zero"},
                      "diffusion": {"family": "affine_trig", "a": [2.0], "b": [1.0]}})
    kernel = sv.Kernel.fractional(0.4)
    run = sv.simulate(model, kernel, n=16, refinement=8, seed=3)
    assert run["reference"].shape == (129, 1)
    assert run["coarse"].shape == (129, 1)
    assert np.isfinite(run["error"]).all()

    const = sv.Model.constant([0.0], 1, [0.5], [1.0])
    assert not sv.simulate(const, kernel, n=8, refinement=4)["error"].any()

    assert sv.Kernel.tempered(0.4, lam=1.0).admissibility()["admissible"]
    bad = sv.Kernel({"H": 0.3, "components": [
        {"c": 0.0, "perturbation": {"family": "power", "coef": 1.0, "exponent": 0.01}}]})
    assert not bad.admissibility()["admissible"]

    qv = sv.qv(sv.Model.constant([0.0], 1, [0.0], [1.0]), sv.Kernel.fractional(0.5),
               [64], refinement=8, paths=400, seed=1)
    est = qv["points"][0]["estimate"][0]
    assert abs(est - 0.5) < 0.05, est

    report = sv.run_experiment({"experiment": "appendix-check"})
    assert report["passed"] and report["schema_version"] == 1

    print("svelab_py smoke test passed")


if __name__ == "__main__":
    main()
