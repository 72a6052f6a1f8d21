"""Grapheme-to-phoneme rule tables, pronunciation lexicons, phone maps.

Rule application is greedy longest-match, left to right.  A rule may map to
an empty phone sequence (silent grapheme).  Phone maps are total lookup
tables collapsing a source phone inventory many-to-one onto a target one.
"""

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class UncoveredGraphemeError(ValueError):
    def __init__(self, word, grapheme, position):
        self.word = word
        self.grapheme = grapheme
        self.position = position
        super().__init__(
            f"no rule covers grapheme {grapheme!r} at position {position} of word {word!r}")


class UnknownPhoneError(ValueError):
    def __init__(self, phone):
        self.phone = phone
        super().__init__(f"phone {phone!r} is not in the map's source inventory")


class AllWordsRejectedError(ValueError):
    """No vocabulary word could be converted to a pronunciation."""


@dataclass
class G2PTable:
    rules: dict  # grapheme string -> tuple of phones

    def __post_init__(self):
        if any(not k for k in self.rules):
            raise ValueError("empty grapheme key in G2P table")
        self._max_key = max(len(k) for k in self.rules) if self.rules else 0

    @property
    def alphabet(self) -> set:
        return {ch for key in self.rules for ch in key}

    @property
    def phones(self) -> set:
        return {p for seq in self.rules.values() for p in seq}


@dataclass
class Lexicon:
    entries: dict = field(default_factory=dict)  # word -> list of pronunciations

    def add(self, word, pron):
        pron = tuple(pron)
        prons = self.entries.setdefault(word, [])
        if pron not in prons:
            prons.append(pron)

    @property
    def phones(self) -> set:
        return {p for prons in self.entries.values() for pron in prons for p in pron}

    def __len__(self):
        return len(self.entries)


@dataclass
class PhoneMap:
    mapping: dict  # source phone -> target phone


def apply_g2p(word: str, table: G2PTable) -> tuple:
    """Segment `word` by greedy longest-match over the rule keys and
    concatenate the matched rules' phones."""
    phones = []
    i = 0
    n = len(word)
    while i < n:
        for span in range(min(table._max_key, n - i), 0, -1):
            rule = table.rules.get(word[i:i + span])
            if rule is not None:
                phones.extend(rule)
                i += span
                break
        else:
            raise UncoveredGraphemeError(word, word[i], i)
    return tuple(phones)


def build_lexicon(vocab, table: G2PTable):
    """Convert every coverable vocabulary word to one pronunciation.

    Returns (lexicon, rejections) where rejections is a list of
    (word, reason) pairs; entries and rejections partition the vocabulary.
    """
    if not vocab:
        raise ValueError("vocabulary is empty")
    lex = Lexicon()
    rejections = []
    for word in sorted(vocab):
        try:
            pron = apply_g2p(word, table)
        except UncoveredGraphemeError as e:
            rejections.append((word, f"uncovered-grapheme:{e.grapheme}"))
            continue
        if not pron:
            rejections.append((word, "empty-pronunciation"))
            continue
        lex.add(word, pron)
    if not lex.entries:
        raise AllWordsRejectedError(
            f"all {len(rejections)} vocabulary words were rejected by the G2P table")
    return lex, rejections


def merge_tables(base: G2PTable, override: G2PTable) -> G2PTable:
    """Overlay a secondary rule table (e.g. loanword spellings); rules in
    `override` win on key conflicts."""
    rules = dict(base.rules)
    rules.update(override.rules)
    return G2PTable(rules)


def map_phones(seq, pm: PhoneMap) -> tuple:
    out = []
    for p in seq:
        try:
            out.append(pm.mapping[p])
        except KeyError:
            raise UnknownPhoneError(p) from None
    return tuple(out)


# ---------------------------------------------------------------------------
# file formats

def read_g2p_table(path) -> G2PTable:
    """One rule per line: grapheme<TAB>phone phone ...  (phones may be empty
    for silent graphemes).  Duplicate keys: last rule wins, with a warning."""
    rules = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            grapheme, _, phones = line.partition("\t")
            if not grapheme:
                raise ValueError(f"{path}:{lineno}: empty grapheme key")
            if grapheme in rules:
                log.warning("%s:%d: duplicate rule for %r; last one wins",
                            path, lineno, grapheme)
            rules[grapheme] = tuple(phones.split())
    return G2PTable(rules)


def read_lexicon(path) -> Lexicon:
    lex = Lexicon()
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            word, _, phones = line.partition("\t")
            lex.add(word, tuple(phones.split()))
    return lex


def write_lexicon(lex: Lexicon, path):
    with open(path, "w", encoding="utf-8") as f:
        for word in sorted(lex.entries):
            for pron in lex.entries[word]:
                f.write(f"{word}\t{' '.join(pron)}\n")


def write_rejections(rejections, path):
    with open(path, "w", encoding="utf-8") as f:
        for word, reason in rejections:
            f.write(f"{word}\t{reason}\n")


def read_phone_map(path) -> PhoneMap:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                src, dst = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected src<TAB>dst") from None
            mapping[src] = dst
    return PhoneMap(mapping)
