#!/usr/bin/env python3
"""Grid-search the entity-substitution augmentation rate.

Trains a trigram LM per candidate rate on the augmented corpus and reports
perplexity on two dev sets: one entity-dense, one sampled like the corpus.
The winning rate minimizes the geometric mean of the two.
"""

import argparse

from phone2word.class_lm import grid_search_augment_rate, read_annotations
from phone2word.textprep import read_clean_corpus, read_gazetteer


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True, help="clean corpus file")
    parser.add_argument("--annotations", required=True,
                        help="sentence_index<TAB>start<TAB>end<TAB>type")
    parser.add_argument("--gazetteer", required=True)
    parser.add_argument("--dev-ne", required=True, help="entity-dense dev set")
    parser.add_argument("--dev-general", required=True)
    parser.add_argument("--rates", default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--discount", type=float, default=0.5)
    args = parser.parse_args()

    rates = [float(r) for r in args.rates.split(",")]
    best, curve = grid_search_augment_rate(
        read_clean_corpus(args.corpus),
        read_annotations(args.annotations),
        read_gazetteer(args.gazetteer),
        read_clean_corpus(args.dev_ne),
        read_clean_corpus(args.dev_general),
        rates=rates, rng_seed=args.seed, discount=args.discount)

    print(f"{'rate':>6}  {'ppl_ne':>10}  {'ppl_general':>12}")
    for rate in rates:
        ne, gen = curve[rate]
        marker = "  <- best" if rate == best else ""
        print(f"{rate:>6}  {ne:>10.3f}  {gen:>12.3f}{marker}")
    print(f"best rate: {best}")


if __name__ == "__main__":
    main()
