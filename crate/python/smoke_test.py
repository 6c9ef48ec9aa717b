#!/usr/bin/env python3
"""Smoke test for the ordmix_py extension module.

Copies the built cdylib next to this file under the importable name, then
exercises every exported entry point on a small synthetic tier. Run from
the repository root after `cargo build -p ordmix-py --release`:

    python3 python/smoke_test.py
"""

import json
import shutil
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def stage_module() -> None:
    built = ROOT / "target" / "release" / "libordmix_py.so"
    if not built.exists():
        sys.exit(f"missing {built}; run `cargo build -p ordmix-py --release` first")
    staged = HERE / "ordmix_py.so"
    if not staged.exists() or built.stat().st_mtime > staged.stat().st_mtime:
        shutil.copy2(built, staged)
    sys.path.insert(0, str(HERE))


def main() -> None:
    stage_module()
    import ordmix_py as om

    # --- dataset construction and embedding -----------------------------
    rows = [[1, 2, 3], [3, 2, 1], [2, 2, 2], [1, 1, 3], [3, 3, 1], [2, 1, 2]]
    data = om.Dataset(rows, item_names=["a", "b", "c"])
    assert data.n_rows == 6 and data.n_items == 3
    assert data.item_names == ["a", "b", "c"]
    assert data.category_counts == [3, 3, 3]
    assert data.codes() == rows
    scores = data.scores()
    assert len(scores) == 6 and len(scores[0]) == 3
    assert all(v == v for row in scores for v in row), "scores must be finite"

    # --- synthetic tier round trip ---------------------------------------
    data, labels = om.generate_tier("easy", replicate=0, seed=20240819)
    assert data.n_rows == len(labels) == 4800
    assert data.n_items == 8

    # --- fixed-K fit, prediction, metrics --------------------------------
    model = om.fit(data, seed=7, k=3)
    assert model.k == 3
    assert model.converged
    assert abs(sum(model.weights) - 1.0) < 1e-9
    assert len(model.assignments) == 4800
    fit_ari = om.ari(model.assignments, labels)
    assert fit_ari > 0.9, f"easy-tier fixed-K ARI too low: {fit_ari:.3f}"
    assert om.nmi(model.assignments, labels) > 0.8

    relabeled = model.predict_labels(data)
    assert relabeled == model.assignments
    preds = model.predict_scores(data)
    assert len(preds) == 4800 and len(preds[0]) == 8

    for k in range(model.k):
        for parent, child in model.edges(k):
            assert 0 <= parent < 8 and 0 <= child < 8 and parent != child

    # --- graph distance ---------------------------------------------------
    assert om.shd(3, [(0, 1)], [(0, 1)]) == 0
    assert om.shd(3, [(0, 1)], [(1, 0)]) == 1
    assert om.shd(3, [(0, 1)], []) == 1

    # --- JSON export --------------------------------------------------------
    exported = json.loads(model.to_json())
    assert len(exported["graphs"]) == 3
    json.loads(model.embedding_json())

    # --- capped discovery + selection on a subsample -------------------------
    small = om.Dataset(
        data.codes()[:900],
        item_names=data.item_names,
        category_counts=data.category_counts,
    )
    sel = om.select(small, seed=11, k_grid=[2, 3], folds=3)
    assert sel.k_star in (2, 3)
    assert len(sel.curve) == 2
    assert sel.n_train + sel.n_test == small.n_rows
    variants = dict(sel.variant_mse)
    assert set(variants) == {"single_graph", "mixture_only", "bnp_dag", "fixed_k_dag"}
    conf = sel.confirmatory()
    assert conf.k == sel.k_star
    json.loads(sel.report_json())

    # --- error surfacing -----------------------------------------------------
    try:
        om.fit(data, seed=1, k=2, k_max=4)
    except ValueError:
        pass
    else:
        raise AssertionError("fit(k=…, k_max=…) must raise ValueError")

    print(
        "smoke test passed:",
        f"fixed-K ARI {fit_ari:.3f}, selection k* = {sel.k_star},",
        f"variants {sorted(variants)}",
    )


if __name__ == "__main__":
    main()
