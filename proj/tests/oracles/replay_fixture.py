"""Writes tests/fixtures/replay_conversation.hsf and the expected replay trace
tests/fixtures/replay_expected.json.

The HSF bytes are produced here with NumPy, and the per-turn forecasts come
from a direct scalar evaluation of the tipping law on the running mean of the
turn states, so the C++ replay path is checked against code that shares
nothing with it."""

import json
import math
import pathlib
import struct

import numpy as np

DIM = 8
LAYERS = 3
LAYER = LAYERS - 2
WARN = 3
TURNS = 12


def write_hsf(path, groups, meta):
    header = {
        "version": 1,
        "dim": DIM,
        "layer_count": LAYERS,
        "dtype": "f32le",
        "groups": [{"label": g["label"], "phrase": g["phrase"], "token_count": g["data"].shape[1]} for g in groups],
        "meta": meta,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(b"HSF1")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for g in groups:
            f.write(np.ascontiguousarray(g["data"], dtype="<f4").tobytes())


def group(rng, label, phrase, center, tokens, spread):
    data = np.empty((LAYERS, tokens, DIM), dtype=np.float32)
    for layer in range(LAYERS):
        scale = 0.5 + 0.5 * layer
        data[layer] = (scale * center + spread * rng.normal(size=(tokens, DIM))).astype(np.float32)
    return {"label": label, "phrase": phrase, "data": data}


def forecast(c, b, d):
    axis = d - b
    x = float(c @ axis)
    drive = float(b @ axis)
    if x >= 0:
        return "Immediate", 0.0, 0
    if drive > 0:
        n = (x / -drive) * math.exp(float(b @ (c - b)))
        return "Delayed", n, math.ceil(n)
    return "Never", math.inf, None


def main():
    rng = np.random.default_rng(7)
    b_center = np.zeros(DIM)
    b_center[0] = 1.0
    d_center = np.zeros(DIM)
    d_center[0] = 1.2
    d_center[1] = 0.9

    groups = []
    for i in range(3):
        groups.append(group(rng, "B", f"basin B phrase {i}", b_center, 2 + i, 0.05))
    for i in range(3):
        groups.append(group(rng, "D", f"basin D phrase {i}", d_center, 3 - i % 2, 0.05))

    # turn states drift from the far side of B towards D
    start = np.zeros(DIM)
    start[0] = 0.8
    start[1] = -1.6
    for k in range(TURNS):
        role = "user" if k % 2 == 0 else "assistant"
        t = k / (TURNS - 1)
        center = start + t * (np.array(d_center) * 2.2 - start)
        groups.append(group(rng, "C", f"{role}: turn {k}", center, 2 + k % 3, 0.03))

    root = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
    write_hsf(root / "replay_conversation.hsf", groups, {"source": "synthetic replay fixture", "seed": 7})

    def layer_tokens(g):
        return g["data"][LAYER].astype(np.float64)

    b = np.mean([layer_tokens(g).mean(axis=0) for g in groups if g["label"] == "B"], axis=0)
    d = np.mean([layer_tokens(g).mean(axis=0) for g in groups if g["label"] == "D"], axis=0)
    states = []
    trace = []
    onset = None
    for k, g in enumerate(x for x in groups if x["label"] == "C"):
        states.append(layer_tokens(g).mean(axis=0))
        c = np.mean(states, axis=0)
        case, n, ceil = forecast(c, b, d)
        warning = case == "Immediate" or (case == "Delayed" and ceil <= WARN)
        if warning and onset is None:
            onset = k
        trace.append({"turn_index": k, "role": g["phrase"].split(":")[0], "case": case,
                      "n_star": n if math.isfinite(n) else None, "n_star_ceil": ceil, "warning": warning, "x": float(c @ (d - b))})

    expected = {"layer": LAYER, "warn_threshold_n": WARN, "warning_onset": onset, "trace": trace}
    (root / "replay_expected.json").write_text(json.dumps(expected, indent=2) + "\n")
    for row in trace:
        print(row)
    print("onset", onset)


if __name__ == "__main__":
    main()
