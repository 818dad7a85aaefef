"""Data-scale sanity run on the WN18RR training split.

Point --train (or SLOGIC_WN18RR_DIR) at the standard train.txt. This is a
long CPU job; a --limit keeps only the first triples for a quick smoke run.
"""

import argparse
import os
import tempfile
from pathlib import Path

from slogic.experiments import scale_check


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    default = Path(os.environ.get("SLOGIC_WN18RR_DIR", "data/WN18RR")) / "train.txt"
    parser.add_argument("--train", type=Path, default=default)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--limit", type=int, default=0, help="use only the first LIMIT lines")
    args = parser.parse_args()
    if not args.train.exists():
        raise SystemExit(f"WN18RR train split not found at {args.train}")
    path = args.train
    if args.limit:
        lines = path.read_text(encoding="utf-8").splitlines()[: args.limit]
        tmp = tempfile.NamedTemporaryFile("w", suffix=".txt", delete=False)
        tmp.write("\n".join(lines) + "\n")
        tmp.close()
        path = Path(tmp.name)
    rep = scale_check(path, threads=args.threads)
    print(f"triples {rep.num_triples}  rules {rep.num_rules}")
    print(f"mining {rep.mining_s:.1f}s  instances {rep.instances_s:.1f}s")
    print(f"max records per triple {rep.max_records_per_triple} (k_pos 5)")
    print(f"pairs per triple {rep.expansion_ratio:.1f} (target 100, accepted 50..200)")


if __name__ == "__main__":
    main()
