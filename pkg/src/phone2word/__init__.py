"""Phone-sequence to word transcription for low-resource languages."""

__version__ = "0.1.0"

from .g2p import G2PTable, Lexicon, PhoneMap, apply_g2p, build_lexicon, map_phones
from .matcher import LcsParams, PronTrie, TrieTunings, build_trie, lcs_decode, trie_decode
from .ngram_lm import LMLimits, NgramLM, perplexity, prune_to_limits, score, train_trigram
from .scoring import (CostTable, grow_clusters, normalize_word, normalized_wer,
                      pairwise_distances, weighted_edit_distance, wer)
from .textprep import (CleanCorpus, CleanOptions, Gazetteer, RawCorpus,
                       augment_gazetteer, clean_corpus, cull_bible, segment_sentences)

__all__ = [
    "G2PTable", "Lexicon", "PhoneMap", "apply_g2p", "build_lexicon", "map_phones",
    "LcsParams", "PronTrie", "TrieTunings", "build_trie", "lcs_decode", "trie_decode",
    "LMLimits", "NgramLM", "perplexity", "prune_to_limits", "score", "train_trigram",
    "CostTable", "grow_clusters", "normalize_word", "normalized_wer",
    "pairwise_distances", "weighted_edit_distance", "wer",
    "CleanCorpus", "CleanOptions", "Gazetteer", "RawCorpus",
    "augment_gazetteer", "clean_corpus", "cull_bible", "segment_sentences",
    "__version__",
]
