#!/usr/bin/env python3
"""Writes the 16x16 P6 images of the two-view test fixture."""

import math
import pathlib
import sys


def pixel(view, x, y):
    # A fronto-parallel sinusoid plane at depth 2 seen from two cameras
    # 0.2 apart: view 1 sees the pattern shifted by f * 0.2 / 2 = 1.6 px.
    u = x + (1.6 if view == 1 else 0.0)
    r = 0.5 + 0.4 * math.sin(0.7 * u) * math.cos(0.5 * y)
    g = 0.5 + 0.3 * math.cos(0.4 * u + 0.3 * y)
    b = 0.5 + 0.2 * math.sin(0.9 * y)
    return [round(255 * min(max(c, 0.0), 1.0)) for c in (r, g, b)]


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/two_view/images")
    out.mkdir(parents=True, exist_ok=True)
    for view in (0, 1):
        data = bytearray(b"P6\n16 16\n255\n")
        for y in range(16):
            for x in range(16):
                data.extend(pixel(view, x, y))
        (out / f"view_{view}.ppm").write_bytes(bytes(data))


if __name__ == "__main__":
    main()
