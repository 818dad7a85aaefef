"""Regenerate the bundled mini KG under src/slogic/data/mini."""

import argparse
from pathlib import Path

from slogic.synthetic import mini_kg

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "slogic" / "data" / "mini"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    kg = mini_kg(args.seed)
    kg.write(args.out)
    sizes = ", ".join(f"{k}={len(v)}" for k, v in kg.splits.items())
    print(f"wrote {args.out}: {sizes}")


if __name__ == "__main__":
    main()
