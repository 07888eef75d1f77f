"""Run experiment configs and print a one-line summary for each.

    python scripts/run_configs.py                    # every file in configs/
    python scripts/run_configs.py configs/tower_pm.toml --workers 4
"""
import argparse
import sys
from pathlib import Path

from closest_return.cli import run_experiment
from closest_return.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args(argv)
    paths = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    for path in paths:
        cfg = load_config(path, output_dir=args.out)
        man = run_experiment(cfg, workers=args.workers)
        keys = [k for k in ("ks", "fit_kind", "fit_rate", "theta_hat", "all_hold", "l1_to_exact", "alpha",
                            "estimates") if k in man.summary]
        shown = ", ".join(f"{k}={man.summary[k]}" for k in keys)
        print(f"{path.name:28s} {man.wall_time:7.1f} s  {shown}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
