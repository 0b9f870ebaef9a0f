#!/usr/bin/env python3
# Writes golden_small.kvtr with an encoder that shares no code with the C++
# reader. The same values are hard-coded in tests/unit/test_traceio.cpp.
import json
import struct
import sys

LAYERS, Q_HEADS, KV_HEADS, HEAD_DIM, SEQ_LEN = 1, 2, 1, 2, 3

KEYS = [[1.0, -0.5], [0.25, 2.0], [-3.0, 0.125]]
VALUES = [[0.5, 0.5], [-1.0, 4.0], [2.5, -0.75]]
QUERIES = [
    [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
    [[-1.0, 0.25], [2.0, -2.0], [0.0625, 8.0]],
]
FOOTER = {"source": "model_dump", "seed": 7, "model_name": "golden-tiny"}


def matrix(rows):
    return b"".join(struct.pack("<f", x) for row in rows for x in row)


def main(path):
    out = b"KVTR" + struct.pack("<I", 1)
    out += struct.pack("<5I", LAYERS, Q_HEADS, KV_HEADS, HEAD_DIM, SEQ_LEN)
    out += struct.pack("<B", 1)
    out += matrix(KEYS) + matrix(VALUES)
    for q in QUERIES:
        out += matrix(q)
    text = json.dumps(FOOTER, separators=(",", ":"), sort_keys=True).encode("utf-8")
    out += struct.pack("<Q", len(text)) + text
    with open(path, "wb") as f:
        f.write(out)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "golden_small.kvtr")
