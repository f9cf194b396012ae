#!/usr/bin/env python3
"""Write the four synthetic heightmap shapes as PGM files.

    python3 scripts/make_heightmaps.py --out heightmaps --width 64 --length 128
"""

import argparse
from pathlib import Path

from voxwind.voxel import SYNTH_SHAPES, synth_heightmap, write_heightmap_pgm


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="heightmaps")
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--length", type=int, default=128)
    parser.add_argument("--amplitude", type=float, default=1.0)
    parser.add_argument("--maxval", type=int, default=255, choices=[255, 65535])
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for shape in SYNTH_SHAPES:
        hm = synth_heightmap(shape, args.width, args.length, args.amplitude)
        path = out / f"{shape.replace('-', '_')}.pgm"
        path.write_bytes(write_heightmap_pgm(hm, maxval=args.maxval))
        print(f"wrote {path} ({args.width}x{args.length}, maxval {args.maxval})")


if __name__ == "__main__":
    main()
