"""Weighted FSTs over the tropical semiring (min, +) for lexicon+LM decoding.

The lexicon transducer maps phone sequences to words as a closure; the LM
transducer has the standard backoff topology, with backoff arcs carrying a
failure label (taken only when no word arc matches), so a sentence's path
cost equals its exact backoff-resolved LM score.  Composition is the
epsilon-aware product construction with failure-arc resolution on the right
side, and aborts as soon as a size budget is exceeded.
"""

import math
from collections import defaultdict, deque, namedtuple
from dataclasses import dataclass, field

from .ngram_lm import BOS, EOS, NgramLM
from .g2p import Lexicon

EPS = "<eps>"
PHI = "#phi"
INF = math.inf

Arc = namedtuple("Arc", ["ilabel", "olabel", "weight", "dst"])


class BudgetExceededError(RuntimeError):
    def __init__(self, states, arcs):
        self.states = states
        self.arcs = arcs
        super().__init__(f"size budget exceeded at {states} states / {arcs} arcs")


class NoPathError(RuntimeError):
    """The machine has no accepting path."""


@dataclass
class SizeBudget:
    max_states: int = 30_000_000
    max_arcs: int = 100_000_000

    def __post_init__(self):
        if self.max_states <= 0 or self.max_arcs <= 0:
            raise ValueError("budget limits must be positive")


class SymbolTable:
    """Dense symbol<->id table; id 0 is always the epsilon label."""

    def __init__(self, symbols=()):
        self._syms = [EPS]
        self._ids = {EPS: 0}
        for s in symbols:
            self.add(s)

    def add(self, sym) -> int:
        sid = self._ids.get(sym)
        if sid is None:
            sid = len(self._syms)
            self._syms.append(sym)
            self._ids[sym] = sid
        return sid

    def id(self, sym) -> int:
        return self._ids[sym]

    def sym(self, sid) -> str:
        return self._syms[sid]

    def __contains__(self, sym):
        return sym in self._ids

    def __len__(self):
        return len(self._syms)

    @property
    def symbols(self):
        return list(self._syms)


def _tables_compatible(a: SymbolTable, b: SymbolTable) -> bool:
    if a is b:
        return True
    sa, sb = a.symbols, b.symbols
    shorter, longer = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    return longer[:len(shorter)] == shorter


class Wfst:
    def __init__(self, isyms: SymbolTable = None, osyms: SymbolTable = None):
        self.arcs = []
        self.finals = {}
        self.isyms = isyms if isyms is not None else SymbolTable()
        self.osyms = osyms if osyms is not None else SymbolTable()
        self.start = self.add_state()
        self.phi_ilabel = None        # failure label on the input side
        self.input_disambig = frozenset()

    def add_state(self) -> int:
        self.arcs.append([])
        return len(self.arcs) - 1

    def add_arc(self, src, ilabel, olabel, weight, dst):
        self.arcs[src].append(Arc(ilabel, olabel, float(weight), dst))

    def set_final(self, state, weight=0.0):
        self.finals[state] = float(weight)

    @property
    def num_states(self):
        return len(self.arcs)

    @property
    def num_arcs(self):
        return sum(len(a) for a in self.arcs)


# ---------------------------------------------------------------------------
# builders

def lexicon_to_fst(lex: Lexicon, sil_penalty: float = None, sil_phone: str = "sil",
                   phone_syms: SymbolTable = None, word_syms: SymbolTable = None) -> Wfst:
    """Closure transducer accepting pronunciation sequences and emitting
    words (word label on the first arc of its path).

    Homophones get distinct auto-inserted disambiguation input symbols
    (#1, #2, ...) on their final arc; their ids are recorded in
    input_disambig so acceptors can carry matching self-loops.
    """
    if not lex.entries:
        raise ValueError("lexicon is empty")
    fst = Wfst(phone_syms, word_syms)
    fst.set_final(fst.start, 0.0)

    by_pron = defaultdict(list)
    for word in sorted(lex.entries):
        for pron in lex.entries[word]:
            if not pron:
                raise ValueError(f"word {word!r} has an empty pronunciation")
            by_pron[pron].append(word)

    disambig = set()
    for pron in sorted(by_pron):
        words = sorted(by_pron[pron])
        for k, word in enumerate(words, 1):
            wid = fst.osyms.add(word)
            labels = [(fst.isyms.add(p), wid if i == 0 else 0)
                      for i, p in enumerate(pron)]
            if len(words) > 1:
                did = fst.isyms.add(f"#{k}")
                disambig.add(did)
                labels.append((did, 0))
            src = fst.start
            for il, ol in labels[:-1]:
                nxt = fst.add_state()
                fst.add_arc(src, il, ol, 0.0, nxt)
                src = nxt
            il, ol = labels[-1]
            fst.add_arc(src, il, ol, 0.0, fst.start)

    if sil_penalty is not None:
        sid = fst.isyms.add(sil_phone)
        fst.add_arc(fst.start, sid, 0, sil_penalty, fst.start)
    fst.input_disambig = frozenset(disambig)
    return fst


def lm_to_fst(lm: NgramLM, word_syms: SymbolTable = None) -> Wfst:
    """Backoff LM as a word acceptor: one state per stored history, word
    arcs weighted -log10 p, failure arcs weighted -log10 bow, finality via
    the sentence-end probability."""
    syms = word_syms if word_syms is not None else SymbolTable()
    fst = Wfst(syms, syms)
    fst.phi_ilabel = syms.add(PHI)

    start_hist = (BOS,) if lm.order > 1 and (BOS,) in lm.tables[0] else ()
    state_of = {start_hist: fst.start}
    histories = [()]
    for n in range(lm.order - 1):
        histories.extend(sorted(lm.tables[n].keys()))
    for hist in histories:
        if hist not in state_of:
            state_of[hist] = fst.add_state()

    def dst_state(hist, w):
        cand = (hist + (w,))[-(lm.order - 1):] if lm.order > 1 else ()
        while cand not in state_of:
            cand = cand[1:]
        return state_of[cand]

    rows = [defaultdict(list) for _ in range(lm.order)]
    for n in range(lm.order):
        for gram, (logp, _) in lm.tables[n].items():
            rows[n][gram[:-1]].append((gram[-1], logp))

    for hist, sid in state_of.items():
        for w, logp in sorted(rows[len(hist)].get(hist, ())):
            if w == EOS:
                fst.set_final(sid, -logp)
            elif w != BOS:
                wid = syms.add(w)
                fst.add_arc(sid, wid, wid, -logp, dst_state(hist, w))
        if hist:
            bow = lm.tables[len(hist) - 1][hist][1]
            shorter = hist[1:]
            while shorter not in state_of:
                shorter = shorter[1:]
            fst.add_arc(sid, fst.phi_ilabel, 0, -bow, state_of[shorter])
    return fst


@dataclass
class ConfusionNetwork:
    """Slots of weighted phone alternatives; weights are -log10 probs whose
    per-slot probabilities may sum to at most 1 (within tolerance).  The
    epsilon marker <eps> is an allowed alternative."""
    slots: list = field(default_factory=list)

    def __post_init__(self, tolerance=1e-6):
        for i, slot in enumerate(self.slots):
            if not slot:
                raise ValueError(f"slot {i} is empty")
            mass = sum(10.0 ** -w for _, w in slot)
            if mass > 1 + tolerance:
                raise ValueError(f"slot {i} probabilities sum to {mass:.6f} > 1")

    @classmethod
    def from_phones(cls, phones):
        return cls([[(p, 0.0)] for p in phones])

    def best_phones(self):
        """Highest-probability phone per slot, epsilon winners skipped."""
        out = []
        for slot in self.slots:
            phone, _ = min(slot, key=lambda pw: (pw[1], pw[0]))
            if phone != EPS:
                out.append(phone)
        return out


def cn_to_fst(cn: ConfusionNetwork, phone_syms: SymbolTable = None,
              disambig_ids=()) -> Wfst:
    """Linear chain acceptor with one state per slot boundary; disambig
    self-loops (weight 0) are added at every state so lexicon paths with
    homophone markers stay traversable."""
    fst = Wfst(phone_syms, None)
    fst.osyms = fst.isyms
    states = [fst.start]
    for slot in cn.slots:
        states.append(fst.add_state())
    for i, slot in enumerate(cn.slots):
        for phone, w in slot:
            pid = 0 if phone == EPS else fst.isyms.add(phone)
            fst.add_arc(states[i], pid, pid, w, states[i + 1])
    for s in states:
        for did in sorted(disambig_ids):
            fst.add_arc(s, did, did, 0.0, s)
    fst.set_final(states[-1], 0.0)
    return fst


def linear_acceptor(tokens, syms: SymbolTable) -> Wfst:
    fst = Wfst(syms, syms)
    prev = fst.start
    for t in tokens:
        nxt = fst.add_state()
        tid = syms.add(t)
        fst.add_arc(prev, tid, tid, 0.0, nxt)
        prev = nxt
    fst.set_final(prev, 0.0)
    return fst


# ---------------------------------------------------------------------------
# composition and search

def compose(a: Wfst, b: Wfst, budget: SizeBudget = None) -> Wfst:
    """Epsilon-aware product construction; relation(result) is the
    composition of the two relations.  Failure arcs on b's input side are
    resolved exactly (taken only when the requested symbol has no match).
    Raises BudgetExceededError the moment the budget is crossed."""
    if not _tables_compatible(a.osyms, b.isyms):
        raise ValueError("a's output alphabet differs from b's input alphabet")
    phi = b.phi_ilabel

    b_index = {}

    def b_arcs_by_label(q):
        idx = b_index.get(q)
        if idx is None:
            idx = defaultdict(list)
            for arc in b.arcs[q]:
                idx[arc.ilabel].append(arc)
            b_index[q] = idx
        return idx

    def b_transitions(qb, x):
        acc = 0.0
        q = qb
        for _ in range(b.num_states + 1):
            idx = b_arcs_by_label(q)
            matches = idx.get(x)
            if matches:
                return [(acc + m.weight, m.olabel, m.dst) for m in matches]
            fallback = idx.get(phi) if phi is not None else None
            if not fallback:
                return []
            acc += fallback[0].weight
            q = fallback[0].dst
        raise ValueError("failure-arc cycle in right-hand machine")

    def b_final(qb):
        acc = 0.0
        q = qb
        for _ in range(b.num_states + 1):
            if q in b.finals:
                return acc + b.finals[q]
            fallback = b_arcs_by_label(q).get(phi) if phi is not None else None
            if not fallback:
                return None
            acc += fallback[0].weight
            q = fallback[0].dst
        raise ValueError("failure-arc cycle in right-hand machine")

    out = Wfst(a.isyms, b.osyms)
    out.input_disambig = a.input_disambig
    smap = {(a.start, b.start): out.start}
    queue = deque([(a.start, b.start)])
    arc_count = 0

    def state_for(pair):
        sid = smap.get(pair)
        if sid is None:
            sid = out.add_state()
            smap[pair] = sid
            if budget is not None and out.num_states > budget.max_states:
                raise BudgetExceededError(out.num_states, arc_count)
            queue.append(pair)
        return sid

    while queue:
        qa, qb = pair = queue.popleft()
        sid = smap[pair]
        if qa in a.finals:
            fb = b_final(qb)
            if fb is not None:
                out.set_final(sid, a.finals[qa] + fb)
        for arc in a.arcs[qa]:
            if arc.olabel == 0:
                moves = [(arc.weight, 0, (arc.dst, qb))]
            else:
                moves = [(arc.weight + w2, ol, (arc.dst, q2))
                         for w2, ol, q2 in b_transitions(qb, arc.olabel)]
            for w, ol, dpair in moves:
                dst = state_for(dpair)
                out.add_arc(sid, arc.ilabel, ol, w, dst)
                arc_count += 1
                if budget is not None and arc_count > budget.max_arcs:
                    raise BudgetExceededError(out.num_states, arc_count)
        for arc in b_arcs_by_label(qb).get(0, ()):
            dst = state_for((qa, arc.dst))
            out.add_arc(sid, 0, arc.olabel, arc.weight, dst)
            arc_count += 1
            if budget is not None and arc_count > budget.max_arcs:
                raise BudgetExceededError(out.num_states, arc_count)
    return out


def shortest_path(m: Wfst):
    """Minimum-weight accepting path (tropical semiring): returns
    (output labels with epsilons removed, total weight).  Handles negative
    arc weights; rejects negative-weight cycles."""
    n = m.num_states
    dist = [INF] * n
    pred = [None] * n
    dist[m.start] = 0.0
    for _ in range(max(n - 1, 1)):
        changed = False
        for s in range(n):
            d = dist[s]
            if d == INF:
                continue
            for arc in m.arcs[s]:
                nd = d + arc.weight
                if nd < dist[arc.dst]:
                    dist[arc.dst] = nd
                    pred[arc.dst] = (s, arc)
                    changed = True
        if not changed:
            break
    else:
        for s in range(n):
            if dist[s] == INF:
                continue
            for arc in m.arcs[s]:
                if dist[s] + arc.weight < dist[arc.dst] - 1e-12:
                    raise ValueError("negative-weight cycle")

    best_state, best_weight = None, INF
    for s in sorted(m.finals):
        w = dist[s] + m.finals[s]
        if w < best_weight:
            best_state, best_weight = s, w
    if best_state is None:
        raise NoPathError("no accepting path")

    arcs_back = []
    s = best_state
    while s != m.start:
        prev, arc = pred[s]
        arcs_back.append(arc)
        s = prev
        if len(arcs_back) > m.num_arcs + 1:
            raise RuntimeError("predecessor chain does not terminate")
    labels = [m.osyms.sym(a.olabel) for a in reversed(arcs_back) if a.olabel != 0]
    return labels, best_weight


@dataclass
class DecodeResult:
    words: list
    weight: float
    used_fallback: bool = False


def decode(cn: ConfusionNetwork, L: Wfst, G: Wfst, budget: SizeBudget = None,
           fallback_lexicon: Lexicon = None) -> DecodeResult:
    """Shortest path through CN∘L∘G (CN∘L composed first).

    When no path exists and a fallback lexicon is given, greedy trie
    decoding of the per-slot best phones is returned, flagged as fallback.
    """
    cn_fst = cn_to_fst(cn, L.isyms, disambig_ids=L.input_disambig)
    cl = compose(cn_fst, L, budget)
    clg = compose(cl, G, budget)
    try:
        labels, weight = shortest_path(clg)
        return DecodeResult(labels, weight, False)
    except NoPathError:
        if fallback_lexicon is None:
            raise
        from .matcher import build_trie, trie_decode
        words, _ = trie_decode(cn.best_phones(), build_trie(fallback_lexicon))
        return DecodeResult(words, INF, True)


def decode_phones(phones, L, G, budget=None, fallback_lexicon=None) -> DecodeResult:
    return decode(ConfusionNetwork.from_phones(phones), L, G, budget,
                  fallback_lexicon)


# ---------------------------------------------------------------------------
# file formats

def write_fst(fst: Wfst, path):
    """Arc lines src<TAB>dst<TAB>ilabel<TAB>olabel<TAB>weight, then final
    lines state<TAB>weight.  The start state is state 0."""
    with open(path, "w", encoding="utf-8") as f:
        for src, arcs in enumerate(fst.arcs):
            for a in arcs:
                f.write(f"{src}\t{a.dst}\t{a.ilabel}\t{a.olabel}\t{a.weight!r}\n")
        for state in sorted(fst.finals):
            f.write(f"{state}\t{fst.finals[state]!r}\n")


def read_fst(path, isyms: SymbolTable = None, osyms: SymbolTable = None) -> Wfst:
    fst = Wfst(isyms, osyms)

    def ensure(state):
        while fst.num_states <= state:
            fst.add_state()

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) == 1 and not parts[0].strip():
                continue
            if len(parts) == 5:
                src, dst, il, ol, w = parts
                ensure(max(int(src), int(dst)))
                fst.add_arc(int(src), int(il), int(ol), float(w), int(dst))
            elif len(parts) == 2:
                state, w = parts
                ensure(int(state))
                fst.set_final(int(state), float(w))
            else:
                raise ValueError(f"{path}:{lineno}: expected 5 (arc) or 2 (final) fields")
    return fst


def write_symbols(syms: SymbolTable, path):
    with open(path, "w", encoding="utf-8") as f:
        for sid, sym in enumerate(syms.symbols):
            f.write(f"{sym}\t{sid}\n")


def read_symbols(path) -> SymbolTable:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            sym, sid = line.split("\t")
            pairs.append((int(sid), sym))
    pairs.sort()
    syms = SymbolTable()
    for sid, sym in pairs:
        if sid == 0:
            if sym != EPS:
                raise ValueError(f"{path}: id 0 must be {EPS}, got {sym!r}")
            continue
        if syms.add(sym) != sid:
            raise ValueError(f"{path}: symbol ids are not dense")
    return syms


def read_cn_file(path):
    """Confusion networks: one slot per line as phone:weight pairs, with a
    blank line between utterances."""
    networks = []
    slots = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                if slots:
                    networks.append(ConfusionNetwork(slots))
                    slots = []
                continue
            slot = []
            for item in line.split():
                phone, _, w = item.rpartition(":")
                slot.append((phone, float(w)))
            slots.append(slot)
    if slots:
        networks.append(ConfusionNetwork(slots))
    return networks


def write_cn_file(networks, path):
    with open(path, "w", encoding="utf-8") as f:
        for i, cn in enumerate(networks):
            if i:
                f.write("\n")
            for slot in cn.slots:
                f.write(" ".join(f"{p}:{w!r}" for p, w in slot) + "\n")
