"""Direct phone-to-word decoders: greedy trie matching and iterative
longest-common-substring matching.

Both decoders are total: every input phone ends up either covered by
exactly one emitted word or listed in the unmatched report.
"""

import random
from dataclasses import dataclass, field

from .g2p import Lexicon, PhoneMap, map_phones
from .scoring import levenshtein


class _TrieNode:
    __slots__ = ("children", "words")

    def __init__(self):
        self.children = {}
        self.words = []


@dataclass
class PronTrie:
    root: _TrieNode
    size: int  # node count

    def lookup(self, phones):
        """Words whose pronunciation is exactly `phones`."""
        node = self.root
        for p in phones:
            node = node.children.get(p)
            if node is None:
                return []
        return list(node.words)


def build_trie(lex: Lexicon) -> PronTrie:
    if not lex.entries:
        raise ValueError("lexicon is empty")
    root = _TrieNode()
    size = 1
    for word in sorted(lex.entries):
        for pron in lex.entries[word]:
            node = root
            for p in pron:
                nxt = node.children.get(p)
                if nxt is None:
                    nxt = node.children[p] = _TrieNode()
                    size += 1
                node = nxt
            if word not in node.words:
                node.words.append(word)
    return PronTrie(root, size)


def soundex_classify(phone, classes: dict):
    """Class id of `phone` under a partition of the phone inventory,
    given as a phone -> class id map."""
    try:
        return classes[phone]
    except KeyError:
        raise ValueError(f"phone {phone!r} is not in the soundex partition") from None


def make_soundex_classes(groups, inventory) -> dict:
    """Build a phone -> class map from merge groups; phones outside any
    group stay in their own class."""
    classes = {p: p for p in inventory}
    for group in groups:
        rep = min(group)
        for p in group:
            classes[p] = rep
    return classes


@dataclass
class TrieTunings:
    preferred_vocab: set = field(default_factory=set)
    phone_simplification: PhoneMap = None
    soundex_classes: dict = None  # phone -> class id; None = exact match
    homonym_unigram: dict = field(default_factory=dict)
    target_length_dist: dict = None  # word length -> probability
    shorter_match_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.shorter_match_bias <= 1:
            raise ValueError("shorter_match_bias must be a probability")
        if self.target_length_dist is not None:
            total = sum(self.target_length_dist.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"target_length_dist sums to {total}, expected 1")


def _pick_homonym(words, tunings):
    pool = [w for w in words if w in tunings.preferred_vocab] or words
    return min(pool, key=lambda w: (-tunings.homonym_unigram.get(w, 0), w))


def _length_l1(counts, total, target):
    if total == 0:
        return sum(target.values())
    lengths = set(counts) | set(target)
    return sum(abs(counts.get(n, 0) / total - target.get(n, 0.0)) for n in lengths)


def trie_decode(phones, trie: PronTrie, tunings: TrieTunings = None):
    """Greedy longest-match decoding.

    From each position the longest trie match is emitted (after phone
    simplification and soundex-class equivalence); an unmatchable phone is
    skipped into the report.  Homonyms prefer the downstream vocabulary,
    then the higher unigram count.  With probability shorter_match_bias a
    shorter match is taken instead when it moves the emitted word-length
    histogram closer (L1) to the target distribution.

    Returns (words, unmatched) with unmatched as (position, phone) pairs.
    """
    if tunings is None:
        tunings = TrieTunings()
    phones = list(phones)
    work = list(map_phones(phones, tunings.phone_simplification)) \
        if tunings.phone_simplification else phones
    classes = tunings.soundex_classes
    rng = random.Random(tunings.seed) if tunings.shorter_match_bias > 0 else None

    words = []
    unmatched = []
    length_counts = {}
    pos = 0
    n = len(work)
    while pos < n:
        # frontier walk; multiple branches are live under soundex classes
        frontier = [trie.root]
        matches = []  # (depth, candidate words)
        depth = 0
        while frontier and pos + depth < n:
            p = work[pos + depth]
            cls = classes.get(p) if classes else p
            if classes is not None and cls is None:
                raise ValueError(f"phone {p!r} is not in the soundex partition")
            nxt = []
            for node in frontier:
                if classes is None:
                    child = node.children.get(p)
                    if child is not None:
                        nxt.append(child)
                else:
                    for key, child in node.children.items():
                        if classes.get(key, key) == cls:
                            nxt.append(child)
            depth += 1
            bearing = sorted({w for node in nxt for w in node.words})
            if bearing:
                matches.append((depth, bearing))
            frontier = nxt
        if not matches:
            unmatched.append((pos, phones[pos]))
            pos += 1
            continue

        depth, candidates = matches[-1]
        if rng is not None and len(matches) > 1 and rng.random() < tunings.shorter_match_bias \
                and tunings.target_length_dist is not None:
            total = len(words)
            options = []
            for d, cand in matches:
                w = _pick_homonym(cand, tunings)
                counts = dict(length_counts)
                counts[len(w)] = counts.get(len(w), 0) + 1
                l1 = _length_l1(counts, total + 1, tunings.target_length_dist)
                options.append((l1, -d, d, cand))
            _, _, depth, candidates = min(options)

        word = _pick_homonym(candidates, tunings)
        words.append(word)
        length_counts[len(word)] = length_counts.get(len(word), 0) + 1
        pos += depth
    return words, unmatched


# ---------------------------------------------------------------------------
# longest-common-substring decoding

@dataclass
class LcsParams:
    coverage_threshold: float = 0.8
    min_match_len: int = 2
    relaxation: tuple = (1, 2)  # (allowed LCS shortfall, required residue gain)

    def __post_init__(self):
        if not 0 < self.coverage_threshold <= 1:
            raise ValueError("coverage_threshold must be in (0, 1]")
        if self.min_match_len < 1:
            raise ValueError("min_match_len must be >= 1")


def _longest_common_substring(seq, pron):
    """(length, seq offset, pron offset) of the longest common substring,
    preferring the earliest seq offset, then the earliest pron offset."""
    best = (0, 0, 0)
    ls, lp = len(seq), len(pron)
    prev = [0] * (lp + 1)
    for i in range(1, ls + 1):
        cur = [0] * (lp + 1)
        si = seq[i - 1]
        for j in range(1, lp + 1):
            if si == pron[j - 1]:
                length = prev[j - 1] + 1
                cur[j] = length
                if length > best[0]:
                    best = (length, i - length, j - length)
        prev = cur
    return best


def _runs(used):
    """Maximal runs of unused positions as (start, end) pairs."""
    runs = []
    start = None
    for i, u in enumerate(used + [True]):
        if not u and start is None:
            start = i
        elif u and start is not None:
            runs.append((start, i))
            start = None
    return runs


def lcs_decode(phones, lex: Lexicon, params: LcsParams = None):
    """Iterative decoding by longest common substring.

    Each round scans every lexicon pronunciation against the unused
    contiguous stretches of the transcription, keeps the words whose best
    common substring has the globally maximal length and covers enough of
    their pronunciation, and emits the one with the smallest
    substring-to-pronunciation Levenshtein distance.  A slightly shorter
    match wins instead when its residue is smaller by the relaxation
    margin.  Matched phones are flagged used; rounds continue while a long
    enough unused run admits a candidate.

    Returns (words, unmatched) with words in transcription order.
    """
    if params is None:
        params = LcsParams()
    phones = list(phones)
    used = [False] * len(phones)
    placed = []  # (position, word)
    r1, r2 = params.relaxation if params.relaxation else (0, 0)

    while True:
        runs = [(s, e) for s, e in _runs(used) if e - s >= params.min_match_len]
        if not runs:
            break
        scans = []  # per word: (lcs_len, word, abs position, pron)
        for word in sorted(lex.entries):
            for pron in lex.entries[word]:
                best = (0, 0, 0)
                best_start = 0
                for s, e in runs:
                    length, off, _ = _longest_common_substring(phones[s:e], pron)
                    if length > best[0]:
                        best = (length, off, 0)
                        best_start = s + off
                if best[0] > 0:
                    scans.append((best[0], word, best_start, pron))
        if not scans:
            break
        global_len = max(s[0] for s in scans)
        pool = [s for s in scans
                if s[0] >= global_len - r1 and s[0] >= params.coverage_threshold * len(s[3])]
        if not pool:
            break

        def selector(entry):
            length, word, start, pron = entry
            res = levenshtein(phones[start:start + length], list(pron))
            return (res, -len(pron), word)

        full = [s for s in pool if s[0] == global_len]
        relaxed = [s for s in pool if s[0] < global_len]
        if full:
            winner = min(full, key=selector)
            if relaxed:
                alt = min(relaxed, key=selector)
                if selector(alt)[0] <= selector(winner)[0] - r2:
                    winner = alt
        else:
            winner = min(relaxed, key=selector)

        length, word, start, _ = winner
        placed.append((start, word))
        for i in range(start, start + length):
            used[i] = True

    placed.sort()
    unmatched = [(i, phones[i]) for i, u in enumerate(used) if not u]
    return [w for _, w in placed], unmatched


# ---------------------------------------------------------------------------
# file formats

def read_phone_file(path):
    """One utterance per line, space-separated phones; a blank line is an
    empty utterance (line count is meaningful for scoring alignment)."""
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f]


def write_word_file(utterances, path):
    with open(path, "w", encoding="utf-8") as f:
        for words in utterances:
            f.write(" ".join(words) + "\n")


def write_unmatched_report(reports, path):
    """reports: per utterance, a list of (position, phone)."""
    with open(path, "w", encoding="utf-8") as f:
        for idx, pairs in enumerate(reports):
            for pos, phone in pairs:
                f.write(f"{idx}\t{pos}\t{phone}\n")
