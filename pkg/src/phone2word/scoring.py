"""Transcription scoring: WER, reweighted edit distance, variant clustering.

Word error rate uses the usual unit-cost alignment.  For variant-spelling
detection, edit distance is reweighted: plain distances of 3 or more are
returned as-is, smaller ones are re-costed by enumerating every
minimal-length edit script and pricing each operation against a table of
cheap operations (apostrophes, vowel insertions, l/r, nasals).  Scripts are
enumerated both over characters and over sequences where the digraph "ng"
is one unit, so that m/n/ng substitutions count as single operations.
"""

import statistics
import unicodedata
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

APOSTROPHES = frozenset("'’‘ʼ`´")
NASAL_UNITS = frozenset(("m", "n", "ng"))

APOSTROPHE_INDEL = "apostrophe-indel"
APOSTROPHE_SUB = "apostrophe-substitute"
VOWEL_BETWEEN_CONSONANTS = "vowel-insert-between-consonants"
VOWEL_APPEND = "vowel-append"
VOWEL_PREPEND = "vowel-prepend-before-consonant"
VOWEL_SUB = "vowel-substitute"
L_R_SUB = "l-r-substitute"
NASAL_SUB = "nasal-substitute"

DEFAULT_COSTS = {
    APOSTROPHE_INDEL: 0.05,
    APOSTROPHE_SUB: 0.05,
    VOWEL_BETWEEN_CONSONANTS: 0.1,
    VOWEL_APPEND: 0.4,
    VOWEL_PREPEND: 0.8,
    VOWEL_SUB: 0.5,
    L_R_SUB: 0.15,
    NASAL_SUB: 0.3,
}


class EmptyReferenceError(ValueError):
    """WER is undefined for an empty reference."""


@dataclass(frozen=True)
class CostTable:
    costs: dict = field(default_factory=lambda: dict(DEFAULT_COSTS))
    default_cost: float = 1.0
    vowels: frozenset = frozenset("aeiou")
    apostrophes: frozenset = APOSTROPHES

    def __post_init__(self):
        unknown = set(self.costs) - set(DEFAULT_COSTS)
        if unknown:
            raise ValueError(f"unknown cost rules: {sorted(unknown)}")
        for name, cost in self.costs.items():
            if not 0 < cost <= 1:
                raise ValueError(f"cost for {name} must be in (0, 1], got {cost}")

    def cost(self, name):
        return self.costs.get(name, self.default_cost)

    def is_vowel(self, unit):
        return unit in self.vowels

    def is_consonant(self, unit):
        return unit.isalpha() and unit not in self.vowels and unit not in self.apostrophes


DEFAULT_COST_TABLE = CostTable()


# ---------------------------------------------------------------------------
# WER

@dataclass
class WerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_tokens: int

    @property
    def errors(self):
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self):
        return self.errors / self.ref_tokens


def wer(ref, hyp) -> WerReport:
    """Minimal-edit alignment of hyp against ref with unit costs.

    Among equal-cost alignments the backtrace prefers substitution over an
    insert+delete pair, and earlier-position edits, so the S/D/I breakdown
    is deterministic.
    """
    report = _align_counts(ref, hyp)
    if report.ref_tokens == 0:
        raise EmptyReferenceError("reference is empty")
    return report


def _align_counts(ref, hyp) -> WerReport:
    ref, hyp = list(ref), list(hyp)
    r, h = len(ref), len(hyp)
    dp = [[0] * (h + 1) for _ in range(r + 1)]
    for i in range(r + 1):
        dp[i][0] = i
    for j in range(h + 1):
        dp[0][j] = j
    for i in range(1, r + 1):
        ri = ref[i - 1]
        row, prev = dp[i], dp[i - 1]
        for j in range(1, h + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]),
                         prev[j] + 1,
                         row[j - 1] + 1)
    subs = dels = ins = 0
    i, j = r, h
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerReport(subs, dels, ins, r)


def score_corpus(refs, hyps) -> WerReport:
    """Aggregate WER over parallel lists of token sequences."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} reference vs {len(hyps)} hypothesis utterances")
    total = WerReport(0, 0, 0, 0)
    for ref, hyp in zip(refs, hyps):
        rep = _align_counts(ref, hyp)
        total.substitutions += rep.substitutions
        total.deletions += rep.deletions
        total.insertions += rep.insertions
        total.ref_tokens += rep.ref_tokens
    if total.ref_tokens == 0:
        raise EmptyReferenceError("reference corpus is empty")
    return total


# ---------------------------------------------------------------------------
# mechanical spelling normalization

def normalize_word(w: str, apostrophes: frozenset = APOSTROPHES) -> str:
    """Lowercase, strip combining accents, drop punctuation — but keep
    apostrophes that sit inside the word (bw'indwara stays intact)."""
    w = unicodedata.normalize("NFD", w.lower())
    w = "".join(ch for ch in w if not unicodedata.combining(ch))
    w = unicodedata.normalize("NFC", w)
    w = "".join(ch for ch in w
                if ch in apostrophes or not unicodedata.category(ch).startswith("P"))
    return w.strip("".join(apostrophes))


# ---------------------------------------------------------------------------
# reweighted edit distance

def levenshtein(a, b) -> int:
    """Plain unit-cost edit distance over the characters (or items) of a, b."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (ca != cb), prev[j] + 1, cur[-1] + 1))
        prev = cur
    return prev[-1]


def bounded_levenshtein(a, b, bound) -> int:
    """min(levenshtein(a, b), bound) with a banded early-exit DP."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la > lb:
        a, b, la, lb = b, a, lb, la
    if lb - la >= bound:
        return bound
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur = [bound] * (lb + 1)
        cur[0] = i
        lo = i - bound + 1
        if lo < 1:
            lo = 1
        hi = i + bound - 1
        if hi > lb:
            hi = lb
        best = bound
        for j in range(lo, hi + 1):
            c = prev[j - 1]
            if ca != b[j - 1]:
                c += 1
            x = cur[j - 1] + 1
            if x < c:
                c = x
            y = prev[j] + 1
            if y < c:
                c = y
            cur[j] = c
            if c < best:
                best = c
        if best >= bound:
            return bound
        prev = cur
    return prev[lb] if prev[lb] < bound else bound


def tokenize_ng(word) -> tuple:
    """Split a word into characters, merging each 'ng' into one unit."""
    units = []
    i = 0
    while i < len(word):
        if word[i] == "n" and i + 1 < len(word) and word[i + 1] == "g":
            units.append("ng")
            i += 2
        else:
            units.append(word[i])
            i += 1
    return tuple(units)


def _minimal_scripts(x, y):
    """Yield every minimal-length edit script turning x into y.

    A script is a list of (kind, i, j) steps, kind in {match, sub, del, ins};
    i, j index into x and y.
    """
    lx, ly = len(x), len(y)
    dp = [[0] * (ly + 1) for _ in range(lx + 1)]
    for i in range(lx + 1):
        dp[i][0] = i
    for j in range(ly + 1):
        dp[0][j] = j
    for i in range(1, lx + 1):
        for j in range(1, ly + 1):
            dp[i][j] = min(dp[i - 1][j - 1] + (x[i - 1] != y[j - 1]),
                           dp[i - 1][j] + 1,
                           dp[i][j - 1] + 1)

    def walk(i, j):
        if i == 0 and j == 0:
            yield []
            return
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (x[i - 1] != y[j - 1]):
            kind = "match" if x[i - 1] == y[j - 1] else "sub"
            for rest in walk(i - 1, j - 1):
                rest.append((kind, i - 1, j - 1))
                yield rest
        if i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            for rest in walk(i - 1, j):
                rest.append(("del", i - 1, j))
                yield rest
        if j > 0 and dp[i][j] == dp[i][j - 1] + 1:
            for rest in walk(i, j - 1):
                rest.append(("ins", i, j - 1))
                yield rest

    yield from walk(lx, ly)


def _indel_cost(unit, left, right, ct: CostTable):
    candidates = []
    if unit in ct.apostrophes:
        candidates.append(ct.cost(APOSTROPHE_INDEL))
    if ct.is_vowel(unit):
        if left is not None and right is not None \
                and ct.is_consonant(left) and ct.is_consonant(right):
            candidates.append(ct.cost(VOWEL_BETWEEN_CONSONANTS))
        if right is None:
            candidates.append(ct.cost(VOWEL_APPEND))
        if left is None and right is not None and ct.is_consonant(right):
            candidates.append(ct.cost(VOWEL_PREPEND))
    return min(candidates) if candidates else ct.default_cost


def _sub_cost(s, t, ct: CostTable):
    candidates = []
    if s in ct.apostrophes and t in ct.apostrophes:
        candidates.append(ct.cost(APOSTROPHE_SUB))
    if ct.is_vowel(s) and ct.is_vowel(t):
        candidates.append(ct.cost(VOWEL_SUB))
    if {s, t} == {"l", "r"}:
        candidates.append(ct.cost(L_R_SUB))
    if s in NASAL_UNITS and t in NASAL_UNITS:
        candidates.append(ct.cost(NASAL_SUB))
    return min(candidates) if candidates else ct.default_cost


def _script_cost(script, x, y, ct: CostTable):
    total = 0.0
    for kind, i, j in script:
        if kind == "match":
            continue
        if kind == "sub":
            total += _sub_cost(x[i], y[j], ct)
        elif kind == "del":
            total += _indel_cost(x[i], x[i - 1] if i > 0 else None,
                                 x[i + 1] if i + 1 < len(x) else None, ct)
        else:  # ins
            total += _indel_cost(y[j], y[j - 1] if j > 0 else None,
                                 y[j + 1] if j + 1 < len(y) else None, ct)
    return total


def weighted_edit_distance(a: str, b: str, ct: CostTable = None) -> float:
    """Edit distance with cheap-operation reweighting.

    Plain distances of 3 or more are returned unreweighted.  Otherwise the
    minimum reweighted cost over all minimal-length edit scripts is
    returned; scripts over ng-merged units are considered too, so a single
    n->ng substitution is one (cheap) operation.
    """
    if ct is None:
        ct = DEFAULT_COST_TABLE
    d = levenshtein(a, b)
    if d == 0 or d >= 3:
        return float(d)
    best = float(d)
    variants = [(tuple(a), tuple(b))]
    ua, ub = tokenize_ng(a), tokenize_ng(b)
    if len(ua) != len(a) or len(ub) != len(b):
        variants.append((ua, ub))
    for x, y in variants:
        for script in _minimal_scripts(x, y):
            c = _script_cost(script, x, y, ct)
            if c < best:
                best = c
    return best


# ---------------------------------------------------------------------------
# pairwise distances over a vocabulary (the performance kernel)

@dataclass
class NeighborArray:
    arrays: dict  # word -> [(distance, word), ...] ascending
    cutoff: float
    min_len: int
    cost_table: CostTable

    def neighbors(self, word):
        return self.arrays.get(word, [])


_PS = {}


def _init_pair_state(words, lens, masks, bound, cutoff, ct):
    _PS["words"] = words
    _PS["lens"] = lens
    _PS["masks"] = masks
    _PS["bound"] = bound
    _PS["cutoff"] = cutoff
    _PS["ct"] = ct


def _scan_rows(rows):
    words = _PS["words"]
    lens = _PS["lens"]
    masks = _PS["masks"]
    bound = _PS["bound"]
    cutoff = _PS["cutoff"]
    ct = _PS["ct"]
    n = len(words)
    out = []
    for i in rows:
        wa = words[i]
        la = lens[i]
        ma = masks[i]
        nma = ~ma
        for j in range(i + 1, n):
            lb = lens[j]
            if lb - la >= bound or la - lb >= bound:
                continue
            mb = masks[j]
            # each character type on one side only forces >= 1 edit
            if (ma & ~mb).bit_count() >= bound or (mb & nma).bit_count() >= bound:
                continue
            d = bounded_levenshtein(wa, words[j], bound)
            if d >= bound:
                continue
            wd = float(d) if d >= 3 else weighted_edit_distance(wa, words[j], ct)
            if wd <= cutoff:
                out.append((i, j, wd))
    return out


def pairwise_distances(words, min_len: int = 6, cutoff: float = 1.5,
                       cost_table: CostTable = None, workers: int = 1) -> NeighborArray:
    """All-pairs reweighted edit distances under `cutoff`, for words of at
    least `min_len` letters.

    Pairs are prescreened with length and character-set lower bounds before
    any DP runs, so the quadratic scan stays cheap; rows are striped across
    worker processes.
    """
    if cost_table is None:
        cost_table = DEFAULT_COST_TABLE
    eligible = sorted({w for w in words if len(w) >= min_len})
    n = len(eligible)
    lens = [len(w) for w in eligible]
    charbits = {}
    masks = []
    for w in eligible:
        m = 0
        for ch in w:
            bit = charbits.setdefault(ch, len(charbits))
            m |= 1 << bit
        masks.append(m)
    # distances >= 3 are never reweighted, so anything provably >= bound
    # cannot land under the cutoff
    bound = max(3, int(cutoff) + 1)

    pairs = []
    if workers <= 1 or n < 2:
        _init_pair_state(eligible, lens, masks, bound, cutoff, cost_table)
        pairs = _scan_rows(range(n))
    else:
        stripes = [list(range(w, n, workers)) for w in range(workers)]
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_pair_state,
                initargs=(eligible, lens, masks, bound, cutoff, cost_table)) as pool:
            for chunk in pool.map(_scan_rows, stripes):
                pairs.extend(chunk)

    arrays = {w: [] for w in eligible}
    for i, j, d in pairs:
        arrays[eligible[i]].append((d, eligible[j]))
        arrays[eligible[j]].append((d, eligible[i]))
    for lst in arrays.values():
        lst.sort()
    return NeighborArray(arrays, cutoff, min_len, cost_table)


# ---------------------------------------------------------------------------
# variant-spelling clusters

@dataclass(frozen=True)
class Cluster:
    centroid: str
    members: frozenset


@dataclass
class VariantClusters:
    clusters: list

    def __post_init__(self):
        seen = set()
        for c in self.clusters:
            if len(c.members) < 2:
                raise ValueError(f"cluster {sorted(c.members)} smaller than 2")
            if c.centroid not in c.members:
                raise ValueError(f"centroid {c.centroid!r} not a member")
            if seen & c.members:
                raise ValueError("clusters are not disjoint")
            seen |= c.members
        self._centroid_of = {m: c.centroid for c in self.clusters for m in c.members}

    def centroid_of(self, word, default=None):
        return self._centroid_of.get(word, default)

    def __len__(self):
        return len(self.clusters)


def grow_clusters(na: NeighborArray, threshold: float = 1.5) -> VariantClusters:
    """Grow a candidate cluster from every word by admitting its nearest
    neighbors while they stay within `threshold` of every member; then drop
    singletons and subset clusters, and resolve multiple membership by
    nearest centroid.
    """
    cache = {}
    for w, lst in na.arrays.items():
        for d, v in lst:
            cache[frozenset((w, v))] = d

    def dist(u, v):
        if u == v:
            return 0.0
        key = frozenset((u, v))
        d = cache.get(key)
        if d is None:
            if na.cutoff >= threshold:
                # missing pair is known to exceed the cutoff
                return threshold + 1.0
            d = weighted_edit_distance(u, v, na.cost_table)
            cache[key] = d
        return d

    grown = []
    for w in sorted(na.arrays):
        members = [w]
        for d, v in na.arrays[w]:
            if d <= threshold and all(dist(v, u) <= threshold for u in members):
                members.append(v)
        if len(members) >= 2:
            grown.append(frozenset(members))

    unique = sorted(set(grown), key=sorted)
    survivors = [c for c in unique if not any(c < other for other in unique)]

    def centroid(members):
        ordered = sorted(members)
        return min(ordered, key=lambda m: (
            statistics.median(dist(m, o) for o in ordered if o != m), m))

    cents = {c: centroid(c) for c in survivors}
    owner = defaultdict(list)
    for c in survivors:
        for w in c:
            owner[w].append(c)
    final = {c: set(c) for c in survivors}
    for w, cs in owner.items():
        if len(cs) > 1:
            keep = min(cs, key=lambda c: (dist(w, cents[c]), cents[c], sorted(c)))
            for c in cs:
                if c is not keep:
                    final[c].discard(w)

    out = [Cluster(centroid(m), frozenset(m)) for m in final.values() if len(m) >= 2]
    out.sort(key=lambda c: c.centroid)
    return VariantClusters(out)


def normalized_wer(ref, hyp, clusters: VariantClusters = None) -> WerReport:
    """WER after spelling normalization and centroid mapping of both sides."""
    def remap(tokens):
        out = []
        for t in tokens:
            t = normalize_word(t)
            if clusters is not None:
                t = clusters.centroid_of(t, t)
            out.append(t)
        return out
    return wer(remap(ref), remap(hyp))


def normalized_corpus_wer(refs, hyps, clusters: VariantClusters = None) -> WerReport:
    def remap(tokens):
        out = []
        for t in tokens:
            t = normalize_word(t)
            if clusters is not None:
                t = clusters.centroid_of(t, t)
            out.append(t)
        return out
    return score_corpus([remap(r) for r in refs], [remap(h) for h in hyps])


# ---------------------------------------------------------------------------
# file formats

def read_cost_table(path) -> CostTable:
    """One rule per line: rule_name<TAB>cost."""
    costs = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                name, cost = line.split("\t")
                costs[name] = float(cost)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected rule_name<TAB>cost") from None
    return CostTable(costs)


def write_clusters(clusters: VariantClusters, path):
    """One cluster per line, centroid first."""
    with open(path, "w", encoding="utf-8") as f:
        for c in clusters.clusters:
            rest = sorted(c.members - {c.centroid})
            f.write(" ".join([c.centroid] + rest) + "\n")


def read_clusters(path) -> VariantClusters:
    clusters = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if toks:
                clusters.append(Cluster(toks[0], frozenset(toks)))
    return VariantClusters(clusters)


def write_wer_report(report: WerReport, path, extra=None):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"substitutions={report.substitutions}\n")
        f.write(f"deletions={report.deletions}\n")
        f.write(f"insertions={report.insertions}\n")
        f.write(f"ref_tokens={report.ref_tokens}\n")
        f.write(f"errors={report.errors}\n")
        f.write(f"wer={report.wer!r}\n")
        f.write(f"wer_percent={100 * report.wer:.2f}\n")
        for key, value in (extra or {}).items():
            f.write(f"{key}={value}\n")
