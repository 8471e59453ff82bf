"""Write a synthetic registry file.

    python3 scripts/gen_registry.py tests/fixtures/registry3.txt --count 3 --seed fixture
"""

import argparse

from iuguard.credential import write_registry
from iuguard.registry_gen import synthetic_records


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--count", type=int, default=3)
    ap.add_argument("--seed", default="fixture")
    args = ap.parse_args()
    write_registry(synthetic_records(args.count, args.seed.encode()), args.out)


if __name__ == "__main__":
    main()
