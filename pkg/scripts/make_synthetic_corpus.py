#!/usr/bin/env python3
"""Write the synthetic demo corpus: WAVs, manifest, vocab files, train config,
and a small pool of noise files for augmentation experiments.

Usage: python scripts/make_synthetic_corpus.py [--out DIR] [--size N] [--seed S]
"""

import argparse
from pathlib import Path

from slu.synth import write_corpus, write_noise_dir, write_train_config


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="synthetic", help="output directory")
    parser.add_argument("--size", type=int, default=50)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    paths = write_corpus(out, args.size, seed=args.seed)
    write_noise_dir(out / "noise", count=12, seed=3)
    write_train_config(out / "train_config.json")
    print(f"manifest:     {paths.manifest}")
    print(f"asr vocab:    {paths.asr_vocab}")
    print(f"nlu vocab:    {paths.nlu_vocab}")
    print(f"noise pool:   {out / 'noise'}")
    print(f"train config: {out / 'train_config.json'}")


if __name__ == "__main__":
    main()
