"""Command-line interface.

Exit codes: 0 ok, 2 usage, 3 validation (bad config/inputs), 4 size budget
exceeded, 5 stage failure.
"""

import argparse
import sys
from pathlib import Path

from . import class_lm as clm
from . import fstdecode as fstd
from . import g2p as g2p_mod
from . import matcher
from . import ngram_lm as nlm
from . import scoring
from . import textprep as tp
from .pipeline import (StageError, ValidationError, _load_ne_classes,
                       config_from_dict, read_config, run_pipeline)

EXIT_VALIDATION = 3
EXIT_BUDGET = 4
EXIT_STAGE = 5


def _cmd_clean(args):
    table = g2p_mod.read_g2p_table(args.g2p)
    raw = tp.read_raw_corpus(args.corpus)
    alphabet = table.alphabet | set(args.extra_alphabet)
    opts = tp.CleanOptions(args.casing, args.strip_punctuation,
                           args.foreign_grapheme_action)
    corpus = tp.clean_corpus(raw, alphabet, opts)
    if args.stoplist:
        corpus = tp.cull_bible(corpus, tp.read_stoplist(args.stoplist),
                               args.bible_threshold)
    if args.max_len or args.boundary_marks:
        corpus = tp.segment_sentences(corpus, args.max_len or 10 ** 9,
                                      set(args.boundary_marks))
    if args.attach_prefixes:
        corpus = tp.attach_prefixes(corpus, args.attach_prefixes.split(","))
    if args.gazetteer:
        corpus = tp.augment_gazetteer(corpus, tp.read_gazetteer(args.gazetteer),
                                      args.copies)
    tp.write_corpus(corpus, args.out)
    print(f"sentences={len(corpus.sentences)} vocab={len(corpus.vocab)}")


def _cmd_build_lexicon(args):
    table = g2p_mod.read_g2p_table(args.g2p)
    if args.loanword_g2p:
        table = g2p_mod.merge_tables(table, g2p_mod.read_g2p_table(args.loanword_g2p))
    corpus = tp.read_clean_corpus(args.corpus)
    lex, rejections = g2p_mod.build_lexicon(set(corpus.vocab), table)
    g2p_mod.write_lexicon(lex, args.out)
    g2p_mod.write_rejections(rejections, args.rejects)
    print(f"entries={len(lex)} rejections={len(rejections)}")


def _cmd_build_lm(args):
    corpus = tp.read_clean_corpus(args.corpus)
    lm = nlm.train_trigram(corpus, smoothing=args.smoothing,
                           discount=args.discount, order=args.order)
    lm = nlm.prune_to_limits(lm, nlm.LMLimits(args.max_unigrams,
                                              args.max_bigrams,
                                              args.max_trigrams))
    nlm.write_arpa(lm, args.out)
    print(" ".join(f"ngram{n + 1}={len(lm.tables[n])}" for n in range(lm.order)))


def _cmd_build_class_lm(args):
    corpus = tp.read_clean_corpus(args.corpus)
    if args.strategy == "augment":
        annotations = clm.read_annotations(args.annotations)
        gaz = tp.read_gazetteer(args.gazetteer)
        aug = clm.augment_ne_data(corpus, annotations, gaz, args.rate, args.seed)
        tp.write_corpus(aug, args.out)
        print(f"sentences={len(aug.sentences)} "
              f"generated={len(aug.sentences) - len(corpus.sentences)}")
        return
    ne_classes = _load_ne_classes(args.ne_classes)
    ne_vocab = {w for ws in ne_classes.values() for w in ws}
    k = min(args.k, len(corpus.vocab))
    window = args.window or None
    if args.strategy == "supervised":
        clustering = clm.supervised_classes(ne_classes, set(corpus.vocab))
    elif args.strategy == "seed":
        seeds = {w: t for t, ws in ne_classes.items()
                 for w in ws if w in corpus.vocab}
        clustering = clm.brown_cluster(corpus, k, seeds=seeds, window=window)
    else:  # expand
        clustering = clm.brown_cluster(corpus, k, window=window)
        new_terms = ne_vocab - set(corpus.vocab)
        if new_terms:
            clustering = clm.expand_clusters(clustering, new_terms,
                                             ne_vocab & set(corpus.vocab))
    model = clm.build_class_lm(corpus, clustering, smoothing=args.smoothing,
                               discount=args.discount)
    prefix = Path(args.out)
    clm.write_class_lm(model, f"{prefix}.clusters.tsv", f"{prefix}.arpa",
                       f"{prefix}.emissions.tsv")
    print(f"clusters={clustering.k}")


def _cmd_build_graph(args):
    lex = g2p_mod.read_lexicon(args.lexicon)
    lm = nlm.read_arpa(args.arpa)
    word_syms = fstd.SymbolTable()
    L = fstd.lexicon_to_fst(lex, args.sil_penalty, args.sil_phone,
                            word_syms=word_syms)
    G = fstd.lm_to_fst(lm, word_syms=word_syms)
    budget = fstd.SizeBudget(args.max_states, args.max_arcs)
    LG = fstd.compose(L, G, budget)
    prefix = Path(args.out)
    fstd.write_fst(L, f"{prefix}.L.fst")
    fstd.write_fst(G, f"{prefix}.G.fst")
    fstd.write_fst(LG, f"{prefix}.LG.fst")
    fstd.write_symbols(L.isyms, f"{prefix}.phones.syms")
    fstd.write_symbols(word_syms, f"{prefix}.words.syms")
    print(f"LG_states={LG.num_states} LG_arcs={LG.num_arcs}")


def _read_utterances(args):
    pm = g2p_mod.read_phone_map(args.phone_map) if args.phone_map else None
    if args.cn:
        networks = fstd.read_cn_file(args.cn)
        if pm:
            networks = [fstd.ConfusionNetwork(
                [[(p if p == fstd.EPS else pm.mapping[p], w) for p, w in slot]
                 for slot in cn.slots]) for cn in networks]
        return networks
    seqs = matcher.read_phone_file(args.phones)
    if pm:
        seqs = [list(g2p_mod.map_phones(s, pm)) for s in seqs]
    return [fstd.ConfusionNetwork.from_phones(s) for s in seqs]


def _cmd_decode(args):
    if not (args.phones or args.cn) or (args.phones and args.cn):
        raise ValidationError("give exactly one of --phones / --cn")
    lex = g2p_mod.read_lexicon(args.lexicon)
    networks = _read_utterances(args)
    hyps, unmatched, metas = [], [], []
    if args.decoder == "fst":
        lm = nlm.read_arpa(args.arpa)
        word_syms = fstd.SymbolTable()
        L = fstd.lexicon_to_fst(lex, args.sil_penalty, args.sil_phone,
                                word_syms=word_syms)
        G = fstd.lm_to_fst(lm, word_syms=word_syms)
        budget = fstd.SizeBudget(args.max_states, args.max_arcs)
        for cn in networks:
            res = fstd.decode(cn, L, G, budget, fallback_lexicon=lex)
            hyps.append(res.words)
            metas.append(("fallback-trie" if res.used_fallback else "fst",
                          res.weight))
    else:
        unigrams = {}
        if args.corpus:
            unigrams = dict(tp.read_clean_corpus(args.corpus).vocab)
        trie = matcher.build_trie(lex)
        tunings = matcher.TrieTunings(homonym_unigram=unigrams, seed=args.seed)
        for cn in networks:
            phones = cn.best_phones()
            if args.decoder == "trie":
                words, miss = matcher.trie_decode(phones, trie, tunings)
            else:
                words, miss = matcher.lcs_decode(phones, lex)
            hyps.append(words)
            unmatched.append(miss)
            metas.append((args.decoder, float(len(miss))))
    matcher.write_word_file(hyps, args.out)
    if args.unmatched:
        matcher.write_unmatched_report(unmatched, args.unmatched)
    if args.meta:
        with open(args.meta, "w", encoding="utf-8") as f:
            for i, (status, weight) in enumerate(metas):
                f.write(f"{i}\t{status}\t{weight!r}\n")
    print(f"utterances={len(hyps)}")


def _cmd_cluster_variants(args):
    if args.words:
        with open(args.words, encoding="utf-8") as f:
            vocab = {w for w in f.read().split()}
    else:
        vocab = set()
        for path in (args.ref, args.hyp):
            if path:
                with open(path, encoding="utf-8") as f:
                    vocab |= set(f.read().split())
    vocab = {scoring.normalize_word(w) for w in vocab}
    ct = scoring.read_cost_table(args.cost_table) if args.cost_table \
        else scoring.DEFAULT_COST_TABLE
    na = scoring.pairwise_distances(vocab, args.min_len, args.cutoff, ct,
                                    args.workers)
    clusters = scoring.grow_clusters(na, args.threshold)
    scoring.write_clusters(clusters, args.out)
    print(f"clusters={len(clusters)}")


def _cmd_score(args):
    with open(args.ref, encoding="utf-8") as f:
        refs = [line.split() for line in f]
    with open(args.hyp, encoding="utf-8") as f:
        hyps = [line.split() for line in f]
    if args.clusters:
        clusters = scoring.read_clusters(args.clusters)
        report = scoring.normalized_corpus_wer(refs, hyps, clusters)
    else:
        report = scoring.score_corpus(refs, hyps)
    if args.out:
        scoring.write_wer_report(report, args.out)
    print(f"wer={100 * report.wer:.1f}%")


def _cmd_run(args):
    values = read_config(args.config) if args.config else {}
    for override in args.overrides:
        if "=" not in override:
            raise ValidationError(f"override must be key=value, got {override!r}")
        key, _, value = override.partition("=")
        values[key.strip()] = value.strip()
    cfg = config_from_dict(values)
    manifest = run_pipeline(cfg)
    for name, timing in manifest.timings.items():
        flag = " (skipped)" if timing.get("skipped") else ""
        print(f"{name}: {timing['seconds']}s{flag}")
    print(f"manifest={Path(cfg.outdir) / 'manifest.json'}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="p2w",
        description="Phone-sequence to word transcription toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="clean raw text into an LM corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--g2p", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extra-alphabet", default="")
    p.add_argument("--casing", default="keep-mixed", choices=tp.CASING_MODES)
    p.add_argument("--foreign-grapheme-action", default="drop-line",
                   choices=tp.FOREIGN_ACTIONS)
    p.add_argument("--strip-punctuation", default=tp.DEFAULT_STRIP_PUNCT)
    p.add_argument("--stoplist")
    p.add_argument("--bible-threshold", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=0)
    p.add_argument("--boundary-marks", default="")
    p.add_argument("--attach-prefixes", default="")
    p.add_argument("--gazetteer")
    p.add_argument("--copies", type=int, default=12)
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("build-lexicon", help="apply G2P rules to the vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--g2p", required=True)
    p.add_argument("--loanword-g2p", help="override rule table merged on top")
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", required=True)
    p.set_defaults(func=_cmd_build_lexicon)

    p = sub.add_parser("build-lm", help="train a backoff n-gram LM")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing", default="kneser-ney", choices=("none", "kneser-ney"))
    p.add_argument("--discount", type=float, default=0.5)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--max-unigrams", type=int, default=120_000)
    p.add_argument("--max-bigrams", type=int, default=30_000_000)
    p.add_argument("--max-trigrams", type=int, default=150_000)
    p.set_defaults(func=_cmd_build_lm)

    p = sub.add_parser("build-class-lm", help="build a class-based LM")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strategy", required=True,
                   choices=("expand", "seed", "supervised", "augment"))
    p.add_argument("--out", required=True,
                   help="output prefix (or corpus path for strategy=augment)")
    p.add_argument("--ne-classes", help="word<TAB>type file")
    p.add_argument("--k", type=int, default=750)
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--smoothing", default="kneser-ney", choices=("none", "kneser-ney"))
    p.add_argument("--discount", type=float, default=0.5)
    p.add_argument("--annotations")
    p.add_argument("--gazetteer")
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_build_class_lm)

    p = sub.add_parser("build-graph", help="compose lexicon and LM graphs")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--arpa", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--max-states", type=int, default=30_000_000)
    p.add_argument("--max-arcs", type=int, default=100_000_000)
    p.add_argument("--sil-penalty", type=float, default=None)
    p.add_argument("--sil-phone", default="sil")
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("decode", help="phone sequences or confusion networks to words")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--arpa", help="required for --decoder fst")
    p.add_argument("--phones")
    p.add_argument("--cn")
    p.add_argument("--decoder", default="fst", choices=("trie", "lcs", "fst"))
    p.add_argument("--out", required=True)
    p.add_argument("--meta")
    p.add_argument("--unmatched")
    p.add_argument("--phone-map")
    p.add_argument("--corpus", help="clean corpus for homonym unigram counts")
    p.add_argument("--max-states", type=int, default=30_000_000)
    p.add_argument("--max-arcs", type=int, default=100_000_000)
    p.add_argument("--sil-penalty", type=float, default=None)
    p.add_argument("--sil-phone", default="sil")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("cluster-variants", help="variant-spelling clusters")
    p.add_argument("--words")
    p.add_argument("--ref")
    p.add_argument("--hyp")
    p.add_argument("--out", required=True)
    p.add_argument("--cost-table")
    p.add_argument("--cutoff", type=float, default=1.5)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--min-len", type=int, default=6)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_cluster_variants)

    p = sub.add_parser("score", help="WER of a hypothesis against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--clusters", help="variant clusters for normalized WER")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("run", help="run the whole pipeline from a config file")
    p.add_argument("--config")
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except fstd.BudgetExceededError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except StageError as e:
        if isinstance(e.cause, fstd.BudgetExceededError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_BUDGET
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE
    except (ValidationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except fstd.NoPathError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
