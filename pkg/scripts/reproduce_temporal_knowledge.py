"""Closeness-only vs closeness+period+trend historical means on a synthetic city."""

import argparse

from crowdflow.experiments import temporal_knowledge


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    args = ap.parse_args()
    print("seed  hm-tc   hm-tm   ratio")
    for seed in args.seeds:
        r = temporal_knowledge(seed)
        print(f"{seed:4d}  {r['hm-tc']:.3f}  {r['hm-tm']:.3f}  {r['hm-tm'] / r['hm-tc']:.3f}")


if __name__ == "__main__":
    main()
