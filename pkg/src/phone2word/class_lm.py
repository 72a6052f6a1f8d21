"""Class-based language models aimed at named entities.

Four ways to obtain word classes: greedy bigram-MI (Brown-style)
clustering, optionally seeded with known entity groups; density-based
expansion of existing clusters with unattested entity terms; fully
supervised classes (one per entity type, singletons elsewhere); and
corpus augmentation that regenerates entity-bearing sentences with
gazetteer substitutions.  A class model is a class-sequence n-gram plus
per-class word emissions, and can be interpolated with a word model.
"""

import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass

from .ngram_lm import (BOS, EOS, UNK, NgramLM, corpus_perplexity,
                       read_arpa, sentence_score, train_trigram, write_arpa)
from .textprep import CleanCorpus, Gazetteer


class OverlappingClassesError(ValueError):
    pass


class NoNeSentencesError(ValueError):
    pass


@dataclass
class Clustering:
    assignments: dict  # word -> cluster id (str)

    @property
    def k(self):
        return len(set(self.assignments.values()))

    def members(self):
        out = defaultdict(list)
        for w in sorted(self.assignments):
            out[self.assignments[w]].append(w)
        return dict(out)

    @classmethod
    def identity(cls, vocab):
        return cls({w: w for w in vocab})


# ---------------------------------------------------------------------------
# greedy mutual-information clustering

def _mi_term(c, left, right, total):
    return (c / total) * math.log2(c * total / (left * right)) if c else 0.0


class _BigramStats:
    """Cluster-level bigram counts with O(neighbors) merge deltas."""

    def __init__(self, word_bigrams, word_cid):
        self.word_bigrams = word_bigrams
        self.rebuild(word_cid)

    def rebuild(self, word_cid):
        self.pair = Counter()
        self.rows = defaultdict(Counter)
        self.cols = defaultdict(Counter)
        self.left = Counter()
        self.right = Counter()
        self.total = 0
        for (u, v), c in self.word_bigrams.items():
            a, b = word_cid[u], word_cid[v]
            self.pair[a, b] += c
            self.rows[a][b] += c
            self.cols[b][a] += c
            self.left[a] += c
            self.right[b] += c
            self.total += c

    def mi(self):
        return sum(_mi_term(c, self.left[a], self.right[b], self.total)
                   for (a, b), c in self.pair.items())

    def merge_delta(self, x, y):
        """Change in MI if clusters x and y were merged."""
        touched = set()
        for b in self.rows.get(x, ()):
            touched.add((x, b))
        for b in self.rows.get(y, ()):
            touched.add((y, b))
        for a in self.cols.get(x, ()):
            touched.add((a, x))
        for a in self.cols.get(y, ()):
            touched.add((a, y))
        old = sum(_mi_term(self.pair[p], self.left[p[0]], self.right[p[1]], self.total)
                  for p in touched)
        newrow = Counter()
        for src in (x, y):
            for b, c in self.rows.get(src, {}).items():
                newrow[x if b in (x, y) else b] += c
        newcol = Counter()
        for src in (x, y):
            for a, c in self.cols.get(src, {}).items():
                newcol[x if a in (x, y) else a] += c
        lm = self.left[x] + self.left[y]
        rm = self.right[x] + self.right[y]
        new = sum(_mi_term(c, lm, rm if b == x else self.right[b], self.total)
                  for b, c in newrow.items())
        new += sum(_mi_term(c, self.left[a], rm, self.total)
                   for a, c in newcol.items() if a != x)
        return new - old


def brown_cluster(corpus: CleanCorpus, k: int, seeds: dict = None,
                  window: int = None, merge_log: list = None,
                  stats: dict = None) -> Clustering:
    """Greedy agglomerative clustering maximizing class-bigram mutual
    information.

    `seeds` maps words to seed group ids; seeded words start (and stay)
    co-clustered.  With a `window`, words enter by descending frequency and
    at most window+1 clusters are active at a time; without one, merging is
    exact greedy over all clusters.  `merge_log` and `stats` are optional
    out-parameters recording (merged, merged, objective, best alternative)
    steps and initial/final objective values.
    """
    vocab = sorted(corpus.vocab)
    if not 1 <= k <= len(vocab):
        raise ValueError(f"k must be between 1 and {len(vocab)}, got {k}")
    seeds = seeds or {}
    unknown = set(seeds) - set(vocab)
    if unknown:
        raise ValueError(f"seed words not in vocabulary: {sorted(unknown)}")

    # sentence boundaries act as fixed context classes; without them, words
    # that only ever occur left-of-something can merge with right-only words
    # at zero MI cost and the objective stops discriminating
    word_bigrams = Counter()
    for sent in corpus.sentences:
        padded = [BOS] + list(sent) + [EOS]
        for u, v in zip(padded, padded[1:]):
            word_bigrams[u, v] += 1
    if not word_bigrams:
        raise ValueError("corpus has no word bigrams to cluster on")

    members = {}
    word_cid = {BOS: -1, EOS: -2}
    next_id = 0
    for gid in sorted({str(g) for g in seeds.values()}):
        group = sorted(w for w in seeds if str(seeds[w]) == gid)
        members[next_id] = group
        for w in group:
            word_cid[w] = next_id
        next_id += 1
    loose = [w for w in vocab if w not in seeds]
    loose.sort(key=lambda w: (-corpus.vocab[w], w))
    if len(members) + len(loose) < k:
        raise ValueError(
            f"seeding leaves only {len(members) + len(loose)} clusters, need {k}")

    if window is None:
        for w in loose:
            members[next_id] = [w]
            word_cid[w] = next_id
            next_id += 1
        pending = []
    else:
        pending = loose[:]
        while pending and len(members) < window + 1:
            w = pending.pop(0)
            members[next_id] = [w]
            word_cid[w] = next_id
            next_id += 1

    # words not yet active cluster-map to a throwaway id; their bigrams are
    # excluded from the objective until they enter
    def current_stats():
        active_bigrams = Counter()
        for (u, v), c in word_bigrams.items():
            if u in word_cid and v in word_cid:
                active_bigrams[u, v] = c
        return _BigramStats(active_bigrams, word_cid)

    st = current_stats()
    if stats is not None:
        stats["initial_mi"] = st.mi()
    mi = st.mi()

    while True:
        cap = (window + 1) if (window is not None and pending) else k
        if len(members) > cap:
            cids = sorted(members)
            scored = [(mi + st.merge_delta(x, y), x, y)
                      for i, x in enumerate(cids) for y in cids[i + 1:]]
            # max objective; ties broken by the smallest cluster-id pair
            new_mi, x, y = max(scored, key=lambda t: (t[0], -t[1], -t[2]))
            runner_up = max((t[0] for t in scored if (t[1], t[2]) != (x, y)),
                            default=None)
            if merge_log is not None:
                merge_log.append((frozenset(members[x]), frozenset(members[y]),
                                  new_mi, runner_up))
            members[x] = sorted(members[x] + members.pop(y))
            for w in members[x]:
                word_cid[w] = x
            st = current_stats()
            mi = st.mi()
        elif pending:
            w = pending.pop(0)
            members[next_id] = [w]
            word_cid[w] = next_id
            next_id += 1
            st = current_stats()
            mi = st.mi()
        else:
            break

    if stats is not None:
        stats["final_mi"] = mi
    ordered = sorted(members.values(), key=lambda ws: ws[0])
    width = len(str(max(len(ordered) - 1, 1)))
    assignments = {}
    for i, ws in enumerate(ordered):
        for w in ws:
            assignments[w] = f"c{i:0{width}d}"
    return Clustering(assignments)


def expand_clusters(c: Clustering, new_terms: set, ne_vocab: set) -> Clustering:
    """Assign each unseen term to the cluster with the highest density of
    entity words; ties go to the larger cluster, then the smaller id."""
    overlap = set(new_terms) & set(c.assignments)
    if overlap:
        raise ValueError(f"terms already clustered: {sorted(overlap)}")
    members = c.members()
    best_cid = min(members, key=lambda cid: (
        -len(set(members[cid]) & set(ne_vocab)) / len(members[cid]),
        -len(members[cid]),
        cid))
    out = dict(c.assignments)
    for t in new_terms:
        out[t] = best_cid
    return Clustering(out)


def supervised_classes(ne_classes: dict, vocab) -> Clustering:
    """One cluster per entity type; every other word is a singleton."""
    seen = {}
    for ne_type in sorted(ne_classes):
        for w in ne_classes[ne_type]:
            if w in seen:
                raise OverlappingClassesError(
                    f"{w!r} is in both {seen[w]!r} and {ne_type!r}")
            seen[w] = ne_type
    assignments = {w: f"ne_{t}" for w, t in seen.items()}
    for w in vocab:
        if w not in seen:
            assignments[w] = f"w_{w}"
    return Clustering(assignments)


# ---------------------------------------------------------------------------
# entity annotations and data augmentation

@dataclass(frozen=True)
class NeAnnotation:
    sentence_index: int
    start: int
    end: int  # exclusive
    ne_type: str


def validate_annotations(annotations, corpus: CleanCorpus):
    by_sent = defaultdict(list)
    for a in annotations:
        if not 0 <= a.sentence_index < len(corpus.sentences):
            raise ValueError(f"annotation references sentence {a.sentence_index}, "
                             f"corpus has {len(corpus.sentences)}")
        sent = corpus.sentences[a.sentence_index]
        if not 0 <= a.start < a.end <= len(sent):
            raise ValueError(f"span {a.start}:{a.end} out of bounds for "
                             f"sentence {a.sentence_index} of length {len(sent)}")
        by_sent[a.sentence_index].append(a)
    for idx, spans in by_sent.items():
        spans.sort(key=lambda a: a.start)
        for prev, cur in zip(spans, spans[1:]):
            if cur.start < prev.end:
                raise ValueError(f"overlapping spans in sentence {idx}")
    return dict(by_sent)


def augment_ne_data(corpus: CleanCorpus, annotations, gaz: Gazetteer,
                    rate: float, rng_seed: int = 0) -> CleanCorpus:
    """Append regenerated entity-bearing sentences, replacing each entity
    span with a uniformly drawn same-type gazetteer phrase.

    The number of generated sentences is round(rate * corpus size); draws
    are reproducible under rng_seed.
    """
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return corpus
    by_sent = validate_annotations(annotations, corpus)
    if not by_sent:
        raise NoNeSentencesError("rate > 0 but no annotated sentences")
    ne_indices = sorted(by_sent)
    by_tag = defaultdict(list)
    for e in gaz.entries:
        by_tag[e.tag].append(e)

    rng = random.Random(rng_seed)
    n_generated = round(rate * len(corpus.sentences))
    generated = []
    for _ in range(n_generated):
        idx = ne_indices[rng.randrange(len(ne_indices))]
        sent = corpus.sentences[idx]
        out = []
        pos = 0
        for span in by_sent[idx]:
            out.extend(sent[pos:span.start])
            candidates = by_tag.get(span.ne_type)
            if candidates:
                out.extend(candidates[rng.randrange(len(candidates))].phrase)
            else:
                out.extend(sent[span.start:span.end])
            pos = span.end
        out.extend(sent[pos:])
        generated.append(out)
    return CleanCorpus.from_sentences(list(corpus.sentences) + generated)


# ---------------------------------------------------------------------------
# the class model itself

@dataclass
class ClassLM:
    clustering: Clustering
    class_ngram: NgramLM
    emissions: dict  # cluster id -> {word: log10 p(word | cluster)}

    @property
    def history_len(self):
        return self.class_ngram.order - 1

    def _class_of(self, w):
        if w in (BOS, EOS):
            return w
        return self.clustering.assignments.get(w, UNK)

    def cond_logprob(self, word, history=()):
        c = self._class_of(word)
        lp = self.class_ngram.cond_logprob(c, tuple(self._class_of(t) for t in history))
        if c not in (BOS, EOS, UNK):
            emit = self.emissions.get(c, {}).get(word)
            lp += emit if emit is not None else -math.inf
        return lp

    def score(self, sentence):
        return sentence_score(self, sentence)

    def perplexity(self, dev):
        return corpus_perplexity(self, dev)


def build_class_lm(corpus: CleanCorpus, c: Clustering,
                   smoothing: str = "kneser-ney", discount: float = 0.5,
                   order: int = 3) -> ClassLM:
    """Train the class-sequence n-gram on the class-mapped corpus; emissions
    are maximum-likelihood word frequencies within each class (uniform for a
    class none of whose members is attested)."""
    missing = set(corpus.vocab) - set(c.assignments)
    if missing:
        raise ValueError(f"clustering does not cover corpus vocabulary: "
                         f"{sorted(missing)[:5]}...")
    mapped = CleanCorpus.from_sentences(
        [[c.assignments[w] for w in sent] for sent in corpus.sentences])
    class_ngram = train_trigram(mapped, smoothing=smoothing,
                                discount=discount, order=order)
    emissions = {}
    for cid, words in c.members().items():
        total = sum(corpus.vocab.get(w, 0) for w in words)
        if total == 0:
            lp = math.log10(1.0 / len(words))
            emissions[cid] = {w: lp for w in words}
        else:
            emissions[cid] = {
                w: math.log10(corpus.vocab[w] / total)
                for w in words if corpus.vocab.get(w, 0) > 0}
    return ClassLM(c, class_ngram, emissions)


@dataclass
class InterpolatedLM:
    """p(w|h) = lam * p_a(w|h) + (1 - lam) * p_b(w|h), as an LM view."""
    a: object
    b: object
    lam: float

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")

    @property
    def history_len(self):
        return max(self.a.history_len, self.b.history_len)

    def cond_logprob(self, word, history=()):
        # endpoints reproduce the component exactly, with no 10**log10 churn
        if self.lam == 1.0:
            return self.a.cond_logprob(word, history)
        if self.lam == 0.0:
            return self.b.cond_logprob(word, history)
        p = self.lam * 10.0 ** self.a.cond_logprob(word, history) \
            + (1.0 - self.lam) * 10.0 ** self.b.cond_logprob(word, history)
        return math.log10(p) if p > 0 else -math.inf

    def score(self, sentence):
        return sentence_score(self, sentence)

    def perplexity(self, dev):
        return corpus_perplexity(self, dev)


def interpolate(a, b, lam: float) -> InterpolatedLM:
    return InterpolatedLM(a, b, lam)


def grid_search_augment_rate(corpus: CleanCorpus, annotations, gaz: Gazetteer,
                             dev_ne: CleanCorpus, dev_general: CleanCorpus,
                             rates=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5),
                             rng_seed: int = 0, discount: float = 0.5):
    """Pick the augmentation rate minimizing the geometric mean of
    perplexities on an entity-dense dev set and a general one.

    Returns (best_rate, {rate: (ppl_ne, ppl_general)}).
    """
    curve = {}
    best = None
    for rate in rates:
        aug = augment_ne_data(corpus, annotations, gaz, rate, rng_seed)
        lm = train_trigram(aug, smoothing="kneser-ney", discount=discount)
        ppl_ne = corpus_perplexity(lm, dev_ne)
        ppl_gen = corpus_perplexity(lm, dev_general)
        curve[rate] = (ppl_ne, ppl_gen)
        objective = math.sqrt(ppl_ne * ppl_gen)
        if best is None or objective < best[0]:
            best = (objective, rate)
    return best[1], curve


# ---------------------------------------------------------------------------
# file formats

def write_clustering(c: Clustering, path):
    with open(path, "w", encoding="utf-8") as f:
        for w in sorted(c.assignments):
            f.write(f"{w}\t{c.assignments[w]}\n")


def read_clustering(path) -> Clustering:
    assignments = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                w, cid = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected word<TAB>cluster_id") from None
            assignments[w] = cid
    return Clustering(assignments)


def read_annotations(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected sentence_index<TAB>start<TAB>end<TAB>type")
            out.append(NeAnnotation(int(parts[0]), int(parts[1]), int(parts[2]), parts[3]))
    return out


def write_emissions(emissions, path):
    with open(path, "w", encoding="utf-8") as f:
        for cid in sorted(emissions):
            for w in sorted(emissions[cid]):
                f.write(f"{cid}\t{w}\t{emissions[cid][w]!r}\n")


def read_emissions(path):
    emissions = defaultdict(dict)
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cid, w, lp = line.split("\t")
            emissions[cid][w] = float(lp)
    return dict(emissions)


def write_class_lm(clm: ClassLM, clustering_path, arpa_path, emissions_path):
    write_clustering(clm.clustering, clustering_path)
    write_arpa(clm.class_ngram, arpa_path)
    write_emissions(clm.emissions, emissions_path)


def read_class_lm(clustering_path, arpa_path, emissions_path) -> ClassLM:
    return ClassLM(read_clustering(clustering_path), read_arpa(arpa_path),
                   read_emissions(emissions_path))
