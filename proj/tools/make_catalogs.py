#!/usr/bin/env python3
"""Regenerate the bundled synthetic star catalogs in data/.

catalog_500.txt: 500 stars over a 6 x 5 degree patch centred on (88, 0).
catalog_50.txt:  50-star fixture used by the loader tests.
"""
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent.parent / "data"


def magnitude(rng):
    # Roughly three quarters brighter than 6.0.
    return round(rng.uniform(1.5, 6.0) if rng.random() < 0.75 else rng.uniform(6.01, 8.0), 2)


def write(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header)
        for ra, dec, mag in rows:
            fh.write(f"{ra:.6f} {dec:.6f} {mag:.2f}\n")


def main():
    rng = random.Random(20240517)
    rows = [(rng.uniform(85.0, 91.0), rng.uniform(-2.5, 2.5), magnitude(rng)) for _ in range(500)]
    write(HERE / "catalog_500.txt",
          "# synthetic star field, 500 stars\n# ra_deg dec_deg magnitude\n", rows)

    rng = random.Random(7)
    rows = [(rng.uniform(87.0, 89.0), rng.uniform(-1.0, 1.0), magnitude(rng)) for _ in range(50)]
    write(HERE / "catalog_50.txt",
          "# loader fixture, 50 stars\n# ra_deg dec_deg magnitude\n\n", rows)


if __name__ == "__main__":
    main()
