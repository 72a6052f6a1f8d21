#!/usr/bin/env python3
"""Sweep the word-class count and record dev perplexity of the class LM
interpolated with a word trigram.  Reports the curve; at realistic data
sizes the curve tends to be flat over a wide range of cluster counts.
"""

import argparse

from phone2word.class_lm import brown_cluster, build_class_lm, interpolate
from phone2word.ngram_lm import train_trigram
from phone2word.textprep import read_clean_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True, help="clean corpus file")
    parser.add_argument("--dev", required=True, help="dev set, one sentence/line")
    parser.add_argument("--counts", default="100,250,500,750,1000,1500")
    parser.add_argument("--window", type=int, default=0, help="0 = exact greedy")
    parser.add_argument("--lam", type=float, default=0.5)
    args = parser.parse_args()

    corpus = read_clean_corpus(args.corpus)
    dev = read_clean_corpus(args.dev)
    word_lm = train_trigram(corpus)
    print(f"word trigram dev perplexity: {word_lm.perplexity(dev):.3f}")
    print(f"{'k':>6}  {'ppl_class':>10}  {'ppl_interp':>10}")
    for k in (int(c) for c in args.counts.split(",")):
        k = min(k, len(corpus.vocab))
        clustering = brown_cluster(corpus, k, window=args.window or None)
        class_lm = build_class_lm(corpus, clustering)
        mixed = interpolate(class_lm, word_lm, args.lam)
        print(f"{k:>6}  {class_lm.perplexity(dev):>10.3f}  "
              f"{mixed.perplexity(dev):>10.3f}")


if __name__ == "__main__":
    main()
