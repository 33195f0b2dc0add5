"""Writes tests/fixtures/gee_reference.json: a small clustered binary data set
and the exchangeable / independence GEE logistic fits that statsmodels
produces for it. The C++ unit tests compare against these numbers."""

import json
import pathlib

import numpy as np
import statsmodels.api as sm


def make_data(seed=20240611, clusters=40):
    rng = np.random.default_rng(seed)
    rows = []
    for c in range(clusters):
        shared = rng.normal(0.0, 0.8)
        for _ in range(int(rng.integers(3, 9))):
            x1 = rng.uniform(0.0, 1.0)
            x2 = float(rng.random() < 0.4)
            x3 = rng.normal()
            eta = -0.7 + 1.3 * x1 + 0.8 * x2 + 0.1 * x3 + shared
            y = float(rng.random() < 1.0 / (1.0 + np.exp(-eta)))
            rows.append((f"p{c}", 1.0, x1, x2, x3, y))
    return rows


def fit(rows, structure):
    groups = np.array([r[0] for r in rows])
    x = np.array([r[1:5] for r in rows])
    y = np.array([r[5] for r in rows])
    model = sm.GEE(y, x, groups=groups, family=sm.families.Binomial(), cov_struct=structure)
    res = model.fit(maxiter=500, ctol=1e-12)
    out = {"params": res.params.tolist(), "bse": res.bse.tolist()}
    if isinstance(structure, sm.cov_struct.Exchangeable):
        out["alpha"] = float(structure.dep_params)
    return out


def main():
    rows = make_data()
    payload = {
        "rows": [{"cluster": r[0], "x": list(r[1:5]), "y": r[5]} for r in rows],
        "exchangeable": fit(rows, sm.cov_struct.Exchangeable()),
        "independence": fit(rows, sm.cov_struct.Independence()),
    }
    target = pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "gee_reference.json"
    target.write_text(json.dumps(payload, indent=1) + "\n")
    print(json.dumps({k: v for k, v in payload.items() if k != "rows"}, indent=1))


if __name__ == "__main__":
    main()
