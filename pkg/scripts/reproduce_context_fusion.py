"""Compare context fusion variants of the graph model on an event-driven synthetic city."""

import argparse

from crowdflow.experiments import FUSION_VARIANTS, context_fusion


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    ap.add_argument("--effect", type=float, default=0.5)
    ap.add_argument("--prob", type=float, default=0.2)
    ap.add_argument("--variants", nargs="+", default=list(FUSION_VARIANTS), choices=FUSION_VARIANTS)
    args = ap.parse_args()
    print("seed  " + "  ".join(f"{v:>12}" for v in args.variants))
    for seed in args.seeds:
        r = context_fusion(seed, args.effect, args.prob, args.variants)
        print(f"{seed:4d}  " + "  ".join(f"{r[v]:12.3f}" for v in args.variants))


if __name__ == "__main__":
    main()
