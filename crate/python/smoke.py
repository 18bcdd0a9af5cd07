"""Smoke test for the ssbench_py extension.

Build and install it first:

    maturin develop -m crates/py/Cargo.toml --release
"""

import json
import os
import sys
import tempfile

import ssbench_py as ssb


def main():
    ds = ssb.generate_synthetic(n_total=1500, n_features=4, event_rate=0.2, nonselect_rate=0.2, seed=3)
    assert len(ds) == 1500 and ds.n_features == 4
    assert abs(ds.nonselect_rate - 0.2) < 0.01, ds
    print(ds)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "data.csv")
        ds.save(path)
        back = ssb.Dataset.load(path)
        assert back.y == ds.y and back.s == ds.s
        assert json.loads(back.provenance)["kind"] == "synthetic"

    assert ssb.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    sub = ssb.subpop_auc([0.1, 0.9, 0.2, 0.8], [0, 1, 0, 1], [1, 1, 0, 0])
    assert sub["selected"] == 1.0 and sub["nonselected"] == 1.0

    w = ssb.ipw_weights([0.5, 0.25, 1.0], 0.5)
    assert w.w == [1.0, 2.0, 0.5], w.w

    study = [row for row, s in zip(ds.x, ds.s) if s == 1][:200]
    target = ds.x[:200]
    kmm = ssb.kmm_weights(study, target)
    kliep = ssb.kliep_weights(study, target, seed=1)
    for weights in (kmm, kliep):
        assert len(weights) == len(study) and min(weights.w) >= 0.0
        print(weights, {k: round(v, 4) for k, v in weights.params.items()})

    train, val, test = ds.split(seed=5)
    model = ssb.fit("tnet", train, val, hidden=[16], head=[8], learning_rate=0.005, max_epochs=30, seed=2)
    preds = model.predict(test.x[:5])
    assert all(sel is not None and deferred == (sel < 0.5) for _, deferred, sel in preds)
    metrics = model.evaluate(test)
    print(model.method, model.choices, {k: v if v is None else round(v, 4) for k, v in metrics.items()})
    assert metrics["auc_identification"] > 0.8

    cell = {
        "dataset_id": "synthetic",
        "dataset": {"kind": "synthetic", "n_features": 4},
        "n_total": 800,
        "event_rate": 0.2,
        "nonselect_rate": 0.2,
        "method": "naive",
        "training": {"max_epochs": 20},
        "fit": {"grid": {"hidden": [[16]], "head": [[8]], "learning_rates": [0.005]}},
    }
    first = ssb.run_cell_json(json.dumps(cell))
    second = ssb.run_cell_json(json.dumps(cell))
    assert first["auc_overall"] == second["auc_overall"]
    print("cell", first["method"], first["hparams"], round(first["auc_overall"], 4))

    try:
        ssb.run_cell_json(json.dumps({**cell, "method": "nope"}))
    except ssb.ConfigError as e:
        print("rejected:", e)
    else:
        raise AssertionError("unknown method accepted")

    assert "tnet" in ssb.method_names()
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
