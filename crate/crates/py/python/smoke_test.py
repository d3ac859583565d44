"""Smoke test for the pet_router_py extension.

Build the module and put it on the path first, e.g.

    cargo build -p pet-router-py --release --features extension-module
    cp target/release/libpet_router_py.so /tmp/pet_router_py.so
    PYTHONPATH=/tmp python3 crates/py/python/smoke_test.py [OUT_DIR]

OUT_DIR, if given, is a directory holding selector.json and projection.json
from `pet-router train-select` / `train-embed`.
"""

import math
import sys

import pet_router_py as pr


def main():
    report = pr.analyze("a = b + c")
    assert abs(report["halstead_volume"] - 11.6096) < 1e-4, report
    assert abs(report["maintainability"] - 92.41) < 0.01, report

    assert pr.extract_code("```python\nx = 1\n```") == "x = 1"
    assert len(pr.templates()) >= 9

    assert pr.r_score(10, 10, True) == 0.0
    assert abs(pr.r_score(10, 100, False) + math.log(10)) < 1e-12
    assert pr.label({"zero_shot": -3.0, "self_debug": 0.5}) == "self_debug"
    try:
        pr.r_score(1, 10, True)
    except ValueError:
        pass
    else:
        raise AssertionError("tokens below 2 must be rejected")

    assert abs(pr.ndcg([0, 1, 2], [1.0, 0.0, 1.0]) - 0.9197) < 1e-4
    assert pr.mrr([[1, 0]], [[1.0, 0.0]]) == 0.5

    folds = pr.kfold([str(i) for i in range(10)], 5, 0)
    assert sorted(i for _, test in folds for i in test) == sorted(str(i) for i in range(10))

    assert abs(pr.cosine_distance([1.0, 0.0], [0.0, 1.0]) - 1.0) < 1e-12
    assert pr.triplet_loss([1.0, 0.0], [1.0, 0.1], [-1.0, 0.0], margin=1.0) == 0.0

    if len(sys.argv) > 1:
        out = sys.argv[1]
        router = pr.Router(f"{out}/selector.json", f"{out}/projection.json")
        ranking = router.predict([0.0] * 32)
        assert len(ranking) == len(router.pets)
        assert abs(sum(p for _, p in ranking) - 1.0) < 1e-9

    print("ok")


if __name__ == "__main__":
    main()
