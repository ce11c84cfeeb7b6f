"""Writes the small binary fixtures under crates/core/tests/fixtures.

The layouts are produced with `struct` and `zlib.crc32` only, independent of
the Rust encoder, so the golden tests check the reader against bytes it did
not write.
"""
import os
import struct
import zlib

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "crates", "core", "tests", "fixtures")

FEATURES = [[1.5, -2.25], [0.0, 1e-3], [3.0, 4.0]]
LABELS = [7, 9, 7]


def embedding(dtype):
    code, fmt = {"f32": (0, "<f"), "f64": (1, "<d")}[dtype]
    rows, cols = len(FEATURES), len(FEATURES[0])
    out = b"GEMB" + struct.pack("<IQQB", 1, rows, cols, code)
    for row in FEATURES:
        for v in row:
            out += struct.pack(fmt, v)
    out += b"GLBL" + struct.pack("<Q", rows)
    for label in LABELS:
        out += struct.pack("<I", label)
    return out


def checkpoint():
    gamma, width, tasks = 10.0, 2, 3
    ids = [4, 1]
    memory = [0.08, -0.01, -0.01, 0.05]
    weights = [0.25, -0.5, 1.0, 0.125]
    out = b"GACL" + struct.pack("<IdQQQ", 1, gamma, width, tasks, len(ids))
    out += struct.pack("<%dI" % len(ids), *ids)
    out += struct.pack("<%dd" % len(memory), *memory)
    out += struct.pack("<%dd" % len(weights), *weights)
    return out + struct.pack("<I", zlib.crc32(out) & 0xFFFFFFFF)


def main():
    os.makedirs(OUT, exist_ok=True)
    files = {
        "small_f64.gemb": embedding("f64"),
        "small_f32.gemb": embedding("f32"),
        "tiny.gacl": checkpoint(),
    }
    for name, data in files.items():
        with open(os.path.join(OUT, name), "wb") as f:
            f.write(data)
        print(name, len(data))


if __name__ == "__main__":
    main()
