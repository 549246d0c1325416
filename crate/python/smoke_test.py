"""Smoke test for the bellcrbm Python module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/bellcrbm-*.whl
then run: python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import bellcrbm


def main() -> None:
    assert bellcrbm.presets() == ["epr-2x2", "epr-8x8", "epr-8x8-3state"]

    s = bellcrbm.chsh_max()
    assert abs(s - 2 * math.sqrt(2)) < 1e-10, s

    table = bellcrbm.born_probabilities(0.0, 0.0)
    assert abs(table[1] - 0.5) < 1e-12 and abs(table[2] - 0.5) < 1e-12, table

    trials = bellcrbm.simulate_dataset(1000, seed=3)
    assert len(trials) == 1000
    assert all(t[3] in (-1, 1) and t[4] in (-1, 1) for t in trials)
    assert trials == bellcrbm.simulate_dataset(1000, seed=3)

    model = bellcrbm.Model.train(preset="epr-2x2", seed=7)
    assert model.converged, model.lineage
    report = model.evaluate()
    assert report["mean_tv"] <= 0.01, report["mean_tv"]
    s_model = report["chsh"][0]["values"]["max"]
    assert abs(s_model - 2 * math.sqrt(2)) < 0.05, s_model

    rows = model.sweep(1.0, 0.1, 10)
    assert len(rows) == 10
    cold = next(r for r in rows if abs(r["temperature"] - 0.2) < 1e-12)
    assert cold["s_max"] >= 3.8, cold

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        again = bellcrbm.Model.load(path)
        assert again.to_text() == model.to_text()
        assert json.loads(again.to_text())["format"] == "bellcrbm-model"

    p = model.conditional_table(0, 1, temperature=0.5)
    assert abs(sum(p) - 1.0) < 1e-12

    try:
        bellcrbm.Model.train(preset="epr-3x3")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print(f"ok: S_oracle={s:.6f} S_model={s_model:.4f} S(T=0.2)={cold['s_max']:.4f} {model!r}")


if __name__ == "__main__":
    main()
