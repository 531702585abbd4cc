"""Parameter and multiply-accumulate counts for the five ablation variants.

    python3 demos/ablation_table.py [--train-steps 50]

With ``--train-steps`` each tiny variant is also trained briefly on the toy
pair and its final PSNR is shown. Short runs say little about the ranking of
variants; they only show that every variant trains.
"""
import argparse

from waveletformer.network import ABLATIONS, build, flop_count, param_count, wide_config
from waveletformer.optim import TrainConfig, fit
from waveletformer.verify import TOY_NETWORK, toy_pair


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-steps", type=int, default=0)
    args = ap.parse_args()

    for label, base, size in (("tiny", TOY_NETWORK, 64), ("wide", wide_config(), 256)):
        print(f"{label} configuration, MACs at {size}x{size}")
        print(f"  {'variant':14s} {'params':>10s} {'GMACs':>8s}" + ("   psnr" if args.train_steps and label == "tiny" else ""))
        for variant in ABLATIONS:
            model = build(base.ablate(variant))
            row = f"  {variant:14s} {param_count(model):10d} {flop_count(model, size, size) / 1e9:8.3f}"
            if args.train_steps and label == "tiny":
                state = fit(model, [toy_pair()], TrainConfig(steps=args.train_steps, crop=64, augment=False))
                row += f"  {state.history[-1]['psnr']:6.2f}"
            print(row)


if __name__ == "__main__":
    main()
