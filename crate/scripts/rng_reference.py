"""Reference implementation of the buffer-weight generator.

Prints the first N standard-normal draws for a seed as `index hexbits value`
lines, matching crates/core/tests/fixtures/buffer_seed42_4x4.txt.
"""
import math
import struct
import sys

MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro256StarStar:
    def __init__(self, seed):
        st = seed
        self.s = []
        for _ in range(4):
            st, out = splitmix64(st)
            self.s.append(out)

    def next_u64(self):
        s = self.s
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result


def normals(seed, count):
    rng = Xoshiro256StarStar(seed)
    out = []
    while len(out) < count:
        u1 = 1.0 - (rng.next_u64() >> 11) * (1.0 / (1 << 53))
        u2 = (rng.next_u64() >> 11) * (1.0 / (1 << 53))
        r = math.sqrt(-2.0 * math.log(u1))
        a = 2.0 * math.pi * u2
        out.append(r * math.cos(a))
        out.append(r * math.sin(a))
    return out[:count]


if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 42
    count = int(sys.argv[2]) if len(sys.argv) > 2 else 16
    for i, v in enumerate(normals(seed, count)):
        bits = struct.unpack("<Q", struct.pack("<d", v))[0]
        print(f"{i} {bits:016x} {v!r}")
