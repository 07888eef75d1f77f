"""Return-time tails lambda(R > k) for a few maps and bases, with the decay fit."""
import argparse

from closest_return import maps as M
from closest_return import tower as T

CASES = [
    ("doubling", (0.0, 0.5), 64),
    ("tent", (0.0, 0.5), 48),  # branches below 2^-53 are not resolvable in doubles
    ("logistic", (0.25, 0.75), 200),
    ("pomeau_manneville", (0.5, 1.0), 1000),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--regularity", type=int, default=0, help="pairs for the (beta, C) fit, 0 to skip")
    args = ap.parse_args()
    for name, base, r_max in CASES:
        fmap = M.zoo()[name]
        tw = T.build_first_return_tower(fmap, base, r_max)
        tail = T.return_tail(tw)
        head = " ".join(f"{v:.3g}" for v in tail.relative[:6])
        print(f"{name:18s} base={base} branches={len(tw.branches):5d} coverage={tw.coverage:.6f} "
              f"gcd={tw.gcd} markov={tw.is_markov}")
        print(f"{'':18s} tail/|base| = {head} ...  {tail.fit_kind} rate {tail.fit_rate:.4f}; "
              f"tail sum bound {T.tail_sum_check(tail)}")
        if args.regularity:
            rep = T.check_regularity(tw, fmap, args.regularity)
            print(f"{'':18s} beta={rep.beta_hat:.4f} C={rep.C_hat:.4g} distortion={rep.max_distortion:.3g}")


if __name__ == "__main__":
    main()
