"""Backoff word n-gram language models, orders 1 to 3.

Estimation is either unsmoothed maximum likelihood (backoff only for unseen
histories) or interpolated Kneser-Ney with one absolute discount D per
order: lower-order distributions use continuation counts, except that
histories starting with the sentence-begin symbol keep raw counts (they can
never occur as a continuation).  Stored probabilities are the fully
interpolated values and the backoff weight of a history is its
interpolation weight, so backoff-resolved probabilities sum to one by
construction.

A fully allocated history (no leftover mass, as under maximum likelihood)
gets the conventional ARPA stand-in backoff weight of -99 rather than
log10(0), keeping all weights finite.
"""

import math
from collections import defaultdict
from dataclasses import dataclass

from .textprep import CleanCorpus, EmptyCorpusError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
LOG10_ZERO = -99.0


class MalformedArpaError(ValueError):
    def __init__(self, path, lineno, msg):
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


@dataclass
class LMLimits:
    max_unigrams: int = 120_000
    max_bigrams: int = 30_000_000
    max_trigrams: int = 150_000

    def __post_init__(self):
        for name in ("max_unigrams", "max_bigrams", "max_trigrams"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_unigrams < 3:
            raise ValueError("max_unigrams must leave room for <s>, </s>, <unk>")


@dataclass
class NgramLM:
    order: int
    # tables[n-1]: n-gram tuple -> (log10 prob, log10 backoff weight);
    # the backoff weight belongs to the n-gram as a history
    tables: list
    vocab: set

    @property
    def predictable_vocab(self):
        return self.vocab - {BOS}

    def histories(self):
        yield ()
        for n in range(self.order - 1):
            yield from self.tables[n].keys()

    def _map(self, w):
        return w if w in self.vocab else UNK

    def cond_logprob(self, word, history=()):
        """Backoff-resolved log10 p(word | history); OOV maps to <unk>."""
        w = self._map(word)
        hist = tuple(self._map(t) for t in history)
        if self.order > 1:
            hist = hist[-(self.order - 1):]
        else:
            hist = ()
        return self._resolve(_known_context(self, hist), w)

    def _resolve(self, hist, w):
        # hist must be stored at its own order (see _known_context)
        if not hist:
            entry = self.tables[0].get((w,))
            return entry[0] if entry is not None else LOG10_ZERO
        entry = self.tables[len(hist)].get(hist + (w,))
        if entry is not None:
            return entry[0]
        bow = self.tables[len(hist) - 1][hist][1]
        return bow + self._resolve(_known_context(self, hist[1:]), w)

    @property
    def history_len(self):
        return self.order - 1

    def score(self, sentence):
        """Total log10 probability of the sentence, sentence-end included."""
        return sentence_score(self, sentence)

    def perplexity(self, dev: CleanCorpus):
        return corpus_perplexity(self, dev)


def _known_context(lm, ctx):
    while ctx and ctx not in lm.tables[len(ctx) - 1]:
        ctx = ctx[1:]
    return ctx


def sentence_score(model, sentence) -> float:
    """Sum of conditional log10 probabilities, sentence-end included.

    Works for any model exposing cond_logprob(word, history) and
    history_len; the history is kept as raw words, models map internally.
    """
    hl = model.history_len
    ctx = (BOS,) if hl else ()
    total = 0.0
    for w in list(sentence) + [EOS]:
        total += model.cond_logprob(w, ctx)
        if hl:
            ctx = (ctx + (w,))[-hl:]
    return total


def corpus_perplexity(model, dev: CleanCorpus) -> float:
    if not dev.sentences:
        raise EmptyCorpusError("development set is empty")
    total = sum(sentence_score(model, s) for s in dev.sentences)
    tokens = sum(len(s) + 1 for s in dev.sentences)
    return 10.0 ** (-total / tokens)


def score(lm, sentence) -> float:
    return sentence_score(lm, sentence)


def perplexity(lm, dev: CleanCorpus) -> float:
    return corpus_perplexity(lm, dev)


# ---------------------------------------------------------------------------
# training

def _collect_counts(sentences, order):
    counts = [defaultdict(int) for _ in range(order)]
    for sent in sentences:
        padded = [BOS] + list(sent) + [EOS]
        for n in range(1, order + 1):
            table = counts[n - 1]
            for i in range(len(padded) - n + 1):
                table[tuple(padded[i:i + n])] += 1
    return counts


def train_trigram(corpus: CleanCorpus, smoothing: str = "kneser-ney",
                  discount: float = 0.5, order: int = 3,
                  unk_floor: float = 1e-7) -> NgramLM:
    """Train a backoff LM of the given order (default trigram).

    smoothing="none" gives maximum-likelihood rows; smoothing="kneser-ney"
    gives interpolated Kneser-Ney with absolute discount `discount`.
    The unknown-word symbol receives `unk_floor` of the unigram mass.
    """
    if not corpus.sentences:
        raise EmptyCorpusError("cannot train on an empty corpus")
    if smoothing not in ("none", "kneser-ney"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if smoothing == "kneser-ney" and not 0 <= discount < 1:
        raise ValueError(f"discount must be in [0, 1), got {discount}")
    if not 1 <= order <= 3:
        raise ValueError(f"order must be 1..3, got {order}")

    counts = _collect_counts(corpus.sentences, order)
    vocab = {k[0] for k in counts[0]} | {BOS, EOS, UNK}
    tables = [dict() for _ in range(order)]
    lm = NgramLM(order, tables, vocab)

    # unigram distribution over everything predictable (not <s>)
    use_continuation = smoothing == "kneser-ney" and order > 1
    if use_continuation:
        cont = defaultdict(set)
        for bigram in counts[1]:
            cont[bigram[1]].add(bigram[0])
        denom = sum(len(s) for s in cont.values())
        base = {w: len(us) / denom for w, us in cont.items()}
    else:
        denom = sum(c for k, c in counts[0].items() if k[0] != BOS)
        base = {k[0]: c / denom for k, c in counts[0].items() if k[0] != BOS}
    if UNK not in base:
        base = {w: p * (1.0 - unk_floor) for w, p in base.items()}
        base[UNK] = unk_floor
    for w, p in base.items():
        tables[0][(w,)] = (math.log10(p), 0.0)
    tables[0][(BOS,)] = (LOG10_ZERO, 0.0)

    # higher orders, bottom-up; setting a level's rows also fixes the
    # backoff weights of its histories one level down
    for n in range(2, order + 1):
        raw = counts[n - 1]
        if smoothing == "kneser-ney" and n < order:
            adj = defaultdict(int)
            for gram in counts[n]:
                adj[gram[1:]] += 1  # distinct extensions seen once each
            adjusted = {}
            for gram in raw:
                if gram[0] == BOS:
                    adjusted[gram] = raw[gram]
                else:
                    adjusted[gram] = adj[gram]
        else:
            adjusted = dict(raw)

        rows = defaultdict(dict)
        for gram, c in adjusted.items():
            if c > 0:
                rows[gram[:-1]][gram[-1]] = c
        for hist, row in rows.items():
            total = sum(row.values())
            types = len(row)
            if smoothing == "kneser-ney":
                lam = discount * types / total
                for w, c in row.items():
                    p = max(c - discount, 0.0) / total \
                        + lam * 10.0 ** lm._resolve(_known_context(lm, hist[1:]), w)
                    tables[n - 1][hist + (w,)] = (math.log10(p), 0.0)
                bow = math.log10(lam) if lam > 0 else LOG10_ZERO
            else:
                for w, c in row.items():
                    tables[n - 1][hist + (w,)] = (math.log10(c / total), 0.0)
                bow = LOG10_ZERO  # no leftover mass under MLE
            prob = tables[n - 2][hist][0]
            tables[n - 2][hist] = (prob, bow)
    return lm


# ---------------------------------------------------------------------------
# pruning

def prune_to_limits(lm: NgramLM, lim: LMLimits) -> NgramLM:
    """Keep the highest-probability n-grams per order within the limits
    (ties broken lexicographically), drop n-grams orphaned by the cuts, and
    recompute backoff weights so every history still sums to one.

    <s>, </s> and <unk> are always retained (counted against the limit).
    """
    limits = [lim.max_unigrams, lim.max_bigrams, lim.max_trigrams][:lm.order]
    if all(len(lm.tables[n]) <= limits[n] for n in range(lm.order)):
        return lm

    specials = [(s,) for s in (BOS, EOS, UNK) if (s,) in lm.tables[0]]
    ranked = sorted((k for k in lm.tables[0] if k not in set(specials)),
                    key=lambda k: (-lm.tables[0][k][0], k))
    keep_uni = set(specials) | set(ranked[:max(limits[0] - len(specials), 0)])
    kept_words = {k[0] for k in keep_uni}

    kept = [dict() for _ in range(lm.order)]
    for k in keep_uni:
        kept[0][k] = lm.tables[0][k]
    prev_keys = keep_uni
    for n in range(1, lm.order):
        candidates = [g for g in lm.tables[n]
                      if all(w in kept_words for w in g) and g[:-1] in prev_keys]
        candidates.sort(key=lambda g: (-lm.tables[n][g][0], g))
        for g in candidates[:limits[n]]:
            kept[n][g] = lm.tables[n][g]
        prev_keys = set(kept[n].keys())

    order = lm.order
    while order > 1 and not kept[order - 1]:
        order -= 1
    kept = kept[:order]

    out = NgramLM(order, kept, kept_words | {BOS, EOS, UNK})

    # renormalize the unigram distribution if words were dropped
    if len(keep_uni) < len(lm.tables[0]):
        total = sum(10.0 ** v[0] for k, v in kept[0].items() if k != (BOS,))
        shift = -math.log10(total)
        for k, v in kept[0].items():
            if k != (BOS,):
                kept[0][k] = (v[0] + shift, v[1])

    # recompute backoff weights bottom-up
    for n in range(1, order):
        rows = defaultdict(list)
        for g in kept[n]:
            rows[g[:-1]].append(g[-1])
        for hist in kept[n - 1]:
            words = rows.get(hist)
            if not words:
                kept[n - 1][hist] = (kept[n - 1][hist][0], 0.0)
                continue
            sum_high = sum(10.0 ** kept[n][hist + (w,)][0] for w in words)
            sum_low = sum(
                10.0 ** out._resolve(_known_context(out, hist[1:]), w) for w in words)
            num, den = 1.0 - sum_high, 1.0 - sum_low
            if num < 1e-12 or den < 1e-12:
                bow = LOG10_ZERO
            else:
                bow = math.log10(num / den)
            kept[n - 1][hist] = (kept[n - 1][hist][0], bow)
    return out


# ---------------------------------------------------------------------------
# ARPA serialization

def write_arpa(lm: NgramLM, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for n in range(lm.order):
            f.write(f"ngram {n + 1}={len(lm.tables[n])}\n")
        for n in range(lm.order):
            f.write(f"\n\\{n + 1}-grams:\n")
            for gram in sorted(lm.tables[n]):
                logp, bow = lm.tables[n][gram]
                line = f"{logp!r}\t{' '.join(gram)}"
                if n + 1 < lm.order:
                    line += f"\t{bow!r}"
                f.write(line + "\n")
        f.write("\n\\end\\\n")


def read_arpa(path) -> NgramLM:
    declared = {}
    tables = []
    section = None  # current n
    state = "preamble"
    lineno = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            stripped = line.strip()
            if state == "preamble":
                if stripped == "\\data\\":
                    state = "data"
                elif stripped:
                    raise MalformedArpaError(path, lineno, "expected \\data\\ header")
                continue
            if stripped == "\\end\\":
                state = "end"
                continue
            if not stripped:
                continue
            if state == "end":
                raise MalformedArpaError(path, lineno, "content after \\end\\")
            if stripped.startswith("\\") and stripped.endswith("-grams:"):
                try:
                    section = int(stripped[1:-len("-grams:")])
                except ValueError:
                    raise MalformedArpaError(path, lineno, f"bad section {stripped!r}") from None
                if section not in declared:
                    raise MalformedArpaError(path, lineno, f"section {section} not declared")
                state = "grams"
                continue
            if state == "data":
                if not stripped.startswith("ngram "):
                    raise MalformedArpaError(path, lineno, f"unexpected line {stripped!r}")
                try:
                    n, count = stripped[len("ngram "):].split("=")
                    declared[int(n)] = int(count)
                except ValueError:
                    raise MalformedArpaError(path, lineno, "bad ngram count line") from None
                while len(tables) < int(n):
                    tables.append({})
                continue
            if state == "grams":
                parts = line.split("\t")
                if len(parts) == 2:
                    logp, gram_s = parts
                    bow = "0.0"
                elif len(parts) == 3:
                    logp, gram_s, bow = parts
                else:
                    raise MalformedArpaError(path, lineno, "expected 2 or 3 tab-separated fields")
                gram = tuple(gram_s.split())
                if len(gram) != section:
                    raise MalformedArpaError(
                        path, lineno, f"{len(gram)}-gram in \\{section}-grams: section")
                try:
                    tables[section - 1][gram] = (float(logp), float(bow))
                except ValueError:
                    raise MalformedArpaError(path, lineno, "bad float") from None
                continue
            raise MalformedArpaError(path, lineno, f"unexpected line {stripped!r}")
    if state != "end":
        raise MalformedArpaError(path, lineno, "missing \\end\\")
    for n, count in declared.items():
        if len(tables[n - 1]) != count:
            raise MalformedArpaError(
                path, 0, f"declared {count} {n}-grams but found {len(tables[n - 1])}")
    order = len(tables)
    while order > 1 and not tables[order - 1]:
        order -= 1
    tables = tables[:order]
    vocab = {k[0] for k in tables[0]} | {BOS, EOS, UNK}
    return NgramLM(order, tables, vocab)
