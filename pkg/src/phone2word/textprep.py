"""Corpus preparation: cleaning, stopword culling, segmentation, gazetteers.

All transforms are pure corpus -> corpus functions; a corpus is a list of
token sequences plus a token count table that is always recomputed from the
sentences, never patched incrementally.
"""

from collections import Counter
from dataclasses import dataclass, field


CASING_MODES = ("keep-mixed", "lowercase", "truecase-by-majority")
FOREIGN_ACTIONS = ("drop-line", "drop-token")

DEFAULT_STRIP_PUNCT = ".,;:!?\"()[]{}<>«»„“”…—–-"


class EmptyCorpusError(ValueError):
    """Every line was discarded (or the input corpus was empty)."""


@dataclass
class RawCorpus:
    lines: list[str]


@dataclass
class CleanCorpus:
    sentences: list[list[str]]
    vocab: Counter = field(default_factory=Counter)

    @classmethod
    def from_sentences(cls, sentences):
        sentences = [list(s) for s in sentences if s]
        vocab = Counter(tok for sent in sentences for tok in sent)
        return cls(sentences, vocab)

    def recount(self):
        return Counter(tok for sent in self.sentences for tok in sent)


@dataclass
class GazetteerEntry:
    phrase: tuple
    tag: str = ""


@dataclass
class Gazetteer:
    entries: list[GazetteerEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.phrase, e.tag)
            if key in seen:
                raise ValueError(f"duplicate gazetteer entry: {' '.join(e.phrase)!r} tag={e.tag!r}")
            if not e.phrase:
                raise ValueError("empty gazetteer phrase")
            seen.add(key)

    def by_tag(self, tag):
        return [e for e in self.entries if e.tag == tag]


@dataclass(frozen=True)
class CleanOptions:
    casing: str = "keep-mixed"
    strip_punctuation: str = DEFAULT_STRIP_PUNCT
    foreign_grapheme_action: str = "drop-line"

    def __post_init__(self):
        if self.casing not in CASING_MODES:
            raise ValueError(f"casing must be one of {CASING_MODES}, got {self.casing!r}")
        if self.foreign_grapheme_action not in FOREIGN_ACTIONS:
            raise ValueError(
                f"foreign_grapheme_action must be one of {FOREIGN_ACTIONS}, "
                f"got {self.foreign_grapheme_action!r}")


def _strip_edges(token, punct):
    return token.strip(punct) if punct else token


def _truecase_map(sentences):
    # majority surface form per lowercased word; ties to the more frequent,
    # then lexicographically smallest form
    forms = {}
    for sent in sentences:
        for tok in sent:
            forms.setdefault(tok.lower(), Counter())[tok] += 1
    return {
        low: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for low, c in forms.items()
    }


def clean_corpus(raw: RawCorpus, alphabet: set, opts: CleanOptions) -> CleanCorpus:
    """Tokenize, strip punctuation, apply casing, and filter foreign graphemes.

    A token is covered when every one of its characters is in `alphabet`.
    With drop-line, one uncovered token discards the whole line; with
    drop-token only the token goes.  Raises EmptyCorpusError when nothing
    survives, which almost always means the corpus script does not match
    the grapheme table.
    """
    if not alphabet:
        raise ValueError("alphabet must be non-empty")
    tokenized = []
    for line in raw.lines:
        toks = [_strip_edges(t, opts.strip_punctuation) for t in line.split()]
        toks = [t for t in toks if t]
        if toks:
            tokenized.append(toks)

    if opts.casing == "lowercase":
        tokenized = [[t.lower() for t in sent] for sent in tokenized]
    elif opts.casing == "truecase-by-majority":
        mapping = _truecase_map(tokenized)
        tokenized = [[mapping[t.lower()] for t in sent] for sent in tokenized]

    kept = []
    for sent in tokenized:
        covered = [all(ch in alphabet for ch in tok) for tok in sent]
        if opts.foreign_grapheme_action == "drop-line":
            if all(covered):
                kept.append(sent)
        else:
            filtered = [t for t, ok in zip(sent, covered) if ok]
            if filtered:
                kept.append(filtered)

    if not kept:
        raise EmptyCorpusError(
            "no line survived cleaning; alphabet and corpus script likely mismatch")
    return CleanCorpus.from_sentences(kept)


def cull_bible(corpus: CleanCorpus, stoplist: set, hit_threshold: float) -> CleanCorpus:
    """Drop sentences whose stopword density reaches `hit_threshold`."""
    if not stoplist:
        raise ValueError("stoplist must be non-empty")
    if not 0 < hit_threshold <= 1:
        raise ValueError(f"hit_threshold must be in (0, 1], got {hit_threshold}")
    kept = [
        sent for sent in corpus.sentences
        if sum(tok in stoplist for tok in sent) / len(sent) < hit_threshold
    ]
    return CleanCorpus.from_sentences(kept)


def segment_sentences(corpus: CleanCorpus, max_len: int, boundary_marks: set) -> CleanCorpus:
    """Re-split sentences at boundary marks, or at max_len tokens, whichever
    comes first.  A token made entirely of boundary marks is removed; a token
    with trailing boundary marks keeps its stem and triggers a split after it.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    out = []
    cur = []
    for sent in corpus.sentences:
        for tok in sent:
            stem = tok.rstrip("".join(boundary_marks)) if boundary_marks else tok
            boundary = stem != tok
            if stem:
                cur.append(stem)
            if (boundary and cur) or len(cur) >= max_len:
                out.append(cur)
                cur = []
        if cur:
            out.append(cur)
            cur = []
    return CleanCorpus.from_sentences(out)


def attach_prefixes(corpus: CleanCorpus, prefixes: list) -> CleanCorpus:
    """Join free-standing prefix tokens (e.g. apostrophe clitics) onto the
    following token: ["n'", "abantu"] -> ["n'abantu"]."""
    pref = set(prefixes)
    out = []
    for sent in corpus.sentences:
        merged = []
        i = 0
        while i < len(sent):
            if sent[i] in pref and i + 1 < len(sent):
                merged.append(sent[i] + sent[i + 1])
                i += 2
            else:
                merged.append(sent[i])
                i += 1
        out.append(merged)
    return CleanCorpus.from_sentences(out)


def augment_gazetteer(corpus: CleanCorpus, gaz: Gazetteer, copies: int) -> CleanCorpus:
    """Append every gazetteer phrase `copies` times as extra sentences."""
    if copies < 1:
        raise ValueError(f"copies must be >= 1, got {copies}")
    sentences = [list(s) for s in corpus.sentences]
    for entry in gaz.entries:
        for _ in range(copies):
            sentences.append(list(entry.phrase))
    return CleanCorpus.from_sentences(sentences)


# ---------------------------------------------------------------------------
# file formats: corpus = one sentence per line; gazetteer = phrase[TAB tag];
# stoplist = one token per line

def read_raw_corpus(path) -> RawCorpus:
    with open(path, encoding="utf-8") as f:
        return RawCorpus([line.rstrip("\n") for line in f])


def read_clean_corpus(path) -> CleanCorpus:
    with open(path, encoding="utf-8") as f:
        return CleanCorpus.from_sentences(
            [line.split() for line in f if line.strip()])


def write_corpus(corpus: CleanCorpus, path):
    with open(path, "w", encoding="utf-8") as f:
        for sent in corpus.sentences:
            f.write(" ".join(sent) + "\n")


def read_gazetteer(path) -> Gazetteer:
    entries = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            phrase, _, tag = line.partition("\t")
            entries.append(GazetteerEntry(tuple(phrase.split()), tag))
    return Gazetteer(entries)


def read_stoplist(path) -> set:
    with open(path, encoding="utf-8") as f:
        stops = {line.strip() for line in f if line.strip()}
    if not stops:
        raise ValueError(f"stoplist {path} is empty")
    return stops
