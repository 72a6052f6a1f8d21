"""End-to-end pipeline: clean -> lexicon -> LM -> decode -> score.

Each stage is a pure files-in/files-out step keyed by a content hash of its
inputs and parameters; re-runs skip stages whose key is unchanged and whose
outputs are intact.  The manifest (manifest.json) records inputs, outputs,
hashes and model statistics and is deterministic for a given config and
seed; wall-clock timings and skip flags go to a separate timings.json.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import class_lm as clm
from . import fstdecode as fstd
from . import g2p as g2p_mod
from . import matcher
from . import ngram_lm as nlm
from . import scoring
from . import textprep as tp
from .textprep import DEFAULT_STRIP_PUNCT


class ValidationError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


DECODERS = ("trie", "lcs", "fst")
CLASS_STRATEGIES = ("none", "expand", "seed", "supervised", "augment")


@dataclass
class PipelineConfig:
    # input files
    corpus: str = None
    g2p_table: str = None
    loanword_g2p: str = None
    gazetteer: str = None
    stoplist: str = None
    phone_map: str = None
    ne_annotations: str = None
    ne_classes: str = None
    cost_table: str = None
    dev_ne: str = None
    dev_general: str = None
    phones_input: str = None
    cn_input: str = None
    reference: str = None
    clusters: str = None
    durations: str = None
    outdir: str = "out"
    # cleaning
    casing: str = "keep-mixed"
    foreign_grapheme_action: str = "drop-line"
    strip_punctuation: str = DEFAULT_STRIP_PUNCT
    extra_alphabet: str = ""
    bible_threshold: float = 0.5
    max_sentence_len: int = 0
    boundary_marks: str = ""
    attach_prefix_list: str = ""
    gazetteer_copies: int = 12
    # language model
    smoothing: str = "kneser-ney"
    discount: float = 0.5
    max_unigrams: int = 120_000
    max_bigrams: int = 30_000_000
    max_trigrams: int = 150_000
    # graphs
    max_states: int = 30_000_000
    max_arcs: int = 100_000_000
    sil_penalty: float = None
    sil_phone: str = "sil"
    # decoding / class LM
    decoder: str = "fst"
    class_strategy: str = "none"
    interpolation_lambda: float = 0.5
    clusters_k: int = 750
    brown_window: int = 0  # 0 = exact greedy
    augment_rate: float = 0.1
    # scoring
    cluster_variants: bool = False
    variant_cutoff: float = 1.5
    variant_min_len: int = 6
    # misc
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.decoder not in DECODERS:
            raise ValidationError(f"decoder must be one of {DECODERS}")
        if self.class_strategy not in CLASS_STRATEGIES:
            raise ValidationError(f"class_strategy must be one of {CLASS_STRATEGIES}")
        if self.corpus is None or self.g2p_table is None:
            raise ValidationError("corpus and g2p_table are required")
        if self.phones_input and self.cn_input:
            raise ValidationError("give phones_input or cn_input, not both")
        for name in ("corpus", "g2p_table", "loanword_g2p", "gazetteer",
                     "stoplist", "phone_map", "ne_annotations", "ne_classes",
                     "cost_table", "dev_ne", "dev_general", "phones_input",
                     "cn_input", "reference", "clusters", "durations"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ValidationError(f"{name} file not found: {path}")
        if self.class_strategy in ("expand", "seed", "supervised") and not self.ne_classes:
            raise ValidationError(f"class_strategy={self.class_strategy} needs ne_classes")
        if self.class_strategy == "augment":
            if not (self.ne_annotations and self.gazetteer):
                raise ValidationError("class_strategy=augment needs ne_annotations and gazetteer")
        return self


_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def config_from_dict(values: dict) -> PipelineConfig:
    known = {f.name: f for f in fields(PipelineConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ValidationError(f"unknown config key {key!r}")
        if raw is None or isinstance(raw, (int, float, bool)):
            kwargs[key] = raw
            continue
        raw = str(raw)
        default = known[key].default
        if isinstance(default, bool):
            if raw.lower() not in _BOOLS:
                raise ValidationError(f"{key}: expected a boolean, got {raw!r}")
            kwargs[key] = _BOOLS[raw.lower()]
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        elif isinstance(default, float) or key in ("sil_penalty",):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return PipelineConfig(**kwargs)


def read_config(path) -> dict:
    """Line-oriented `key = value` file; # starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    stages: dict = field(default_factory=dict)    # name -> stage record
    artifacts: dict = field(default_factory=dict)  # relpath -> {sha256, bytes}
    seed: int = 0
    timings: dict = field(default_factory=dict)   # name -> {seconds, skipped}

    def manifest_dict(self):
        return {"seed": self.seed, "stages": self.stages, "artifacts": self.artifacts}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(manifest: RunManifest, outdir):
    outdir = Path(outdir)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest.manifest_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(outdir / "timings.json", "w", encoding="utf-8") as f:
        json.dump(manifest.timings, f, indent=2, sort_keys=True)
        f.write("\n")


def load_previous_manifest(outdir):
    path = Path(outdir) / "manifest.json"
    if not path.exists():
        return None
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError):
        return None


class _Runner:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.outdir = Path(cfg.outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.previous = load_previous_manifest(self.outdir)
        self.manifest = RunManifest(seed=cfg.seed)

    def path(self, name) -> Path:
        return self.outdir / name

    def _rel(self, path) -> str:
        path = Path(path)
        try:
            return str(path.relative_to(self.outdir))
        except ValueError:
            return str(path)

    def stage(self, name, inputs, params, outputs, fn):
        """Run fn unless inputs+params are unchanged and outputs intact."""
        inputs = [str(p) for p in inputs]
        key_src = json.dumps(
            {"inputs": {self._rel(p): _sha256(p) for p in sorted(inputs)},
             "params": {k: repr(v) for k, v in sorted(params.items())}},
            sort_keys=True)
        key = hashlib.sha256(key_src.encode()).hexdigest()
        record = {"key": key,
                  "inputs": sorted(self._rel(p) for p in inputs),
                  "outputs": sorted(self._rel(p) for p in outputs),
                  "stats": {}}

        prev = (self.previous or {}).get("stages", {}).get(name)
        prev_artifacts = (self.previous or {}).get("artifacts", {})
        can_skip = (
            prev is not None and prev.get("key") == key
            and all(Path(p).exists() for p in outputs)
            and all(prev_artifacts.get(self._rel(p), {}).get("sha256") == _sha256(p)
                    for p in outputs))
        if can_skip:
            record["stats"] = prev.get("stats", {})
            self.manifest.stages[name] = record
            self.manifest.timings[name] = {"seconds": 0.0, "skipped": True}
        else:
            t0 = time.monotonic()
            try:
                stats = fn()
            except (ValidationError, fstd.BudgetExceededError):
                raise
            except Exception as e:
                raise StageError(name, e) from e
            record["stats"] = stats or {}
            self.manifest.stages[name] = record
            self.manifest.timings[name] = {
                "seconds": round(time.monotonic() - t0, 6), "skipped": False}
        for p in outputs:
            self.manifest.artifacts[self._rel(p)] = {
                "sha256": _sha256(p), "bytes": Path(p).stat().st_size}


# ---------------------------------------------------------------------------
# stage implementations

def _load_ne_classes(path):
    """File of word<TAB>type lines -> {type: set of words}."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                word, ne_type = line.split("\t")
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: expected word<TAB>type") from None
            out.setdefault(ne_type, set()).add(word)
    return out


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    cfg.validate()
    r = _Runner(cfg)
    table = g2p_mod.read_g2p_table(cfg.g2p_table)
    if cfg.loanword_g2p:
        table = g2p_mod.merge_tables(table, g2p_mod.read_g2p_table(cfg.loanword_g2p))
    current = [cfg.corpus]  # path of the corpus after the latest text stage

    def text_stage(name, out_name, params, fn, extra_inputs=()):
        out = r.path(out_name)
        src = current[0]
        r.stage(name, [src, *extra_inputs], params, [out], lambda: fn(src, out))
        current[0] = str(out)

    # -- clean
    def do_clean(src, out):
        raw = tp.read_raw_corpus(src)
        alphabet = table.alphabet | set(cfg.extra_alphabet)
        opts = tp.CleanOptions(cfg.casing, cfg.strip_punctuation,
                               cfg.foreign_grapheme_action)
        clean = tp.clean_corpus(raw, alphabet, opts)
        tp.write_corpus(clean, out)
        return {"sentences": len(clean.sentences), "vocab": len(clean.vocab)}
    g2p_inputs = [cfg.g2p_table] + ([cfg.loanword_g2p] if cfg.loanword_g2p else [])
    text_stage("clean", "10_clean.txt",
               {"casing": cfg.casing, "strip": cfg.strip_punctuation,
                "foreign": cfg.foreign_grapheme_action, "extra": cfg.extra_alphabet},
               do_clean, extra_inputs=g2p_inputs)

    # -- cull Bible-like sentences
    if cfg.stoplist:
        def do_cull(src, out):
            corpus = tp.read_clean_corpus(src)
            stops = tp.read_stoplist(cfg.stoplist)
            culled = tp.cull_bible(corpus, stops, cfg.bible_threshold)
            tp.write_corpus(culled, out)
            return {"sentences": len(culled.sentences),
                    "removed": len(corpus.sentences) - len(culled.sentences)}
        text_stage("cull", "20_culled.txt", {"threshold": cfg.bible_threshold},
                   do_cull, extra_inputs=[cfg.stoplist])

    # -- sentence segmentation
    if cfg.max_sentence_len > 0 or cfg.boundary_marks:
        def do_segment(src, out):
            corpus = tp.read_clean_corpus(src)
            max_len = cfg.max_sentence_len if cfg.max_sentence_len > 0 else 10 ** 9
            seg = tp.segment_sentences(corpus, max_len, set(cfg.boundary_marks))
            tp.write_corpus(seg, out)
            return {"sentences": len(seg.sentences)}
        text_stage("segment", "30_segmented.txt",
                   {"max_len": cfg.max_sentence_len, "marks": cfg.boundary_marks},
                   do_segment)

    # -- clitic prefix attachment
    if cfg.attach_prefix_list:
        prefixes = [p for p in cfg.attach_prefix_list.split(",") if p]

        def do_prefix(src, out):
            corpus = tp.read_clean_corpus(src)
            tp.write_corpus(tp.attach_prefixes(corpus, prefixes), out)
            return {}
        text_stage("prefixes", "35_prefixed.txt", {"prefixes": prefixes}, do_prefix)

    # -- gazetteer duplication
    if cfg.gazetteer:
        def do_gaz(src, out):
            corpus = tp.read_clean_corpus(src)
            gaz = tp.read_gazetteer(cfg.gazetteer)
            aug = tp.augment_gazetteer(corpus, gaz, cfg.gazetteer_copies)
            tp.write_corpus(aug, out)
            return {"entries": len(gaz.entries), "copies": cfg.gazetteer_copies,
                    "sentences": len(aug.sentences)}
        text_stage("gazetteer", "40_gazetteer.txt",
                   {"copies": cfg.gazetteer_copies}, do_gaz,
                   extra_inputs=[cfg.gazetteer])

    # -- entity-substitution data augmentation
    if cfg.class_strategy == "augment":
        def do_ne_augment(src, out):
            corpus = tp.read_clean_corpus(src)
            annotations = clm.read_annotations(cfg.ne_annotations)
            gaz = tp.read_gazetteer(cfg.gazetteer)
            aug = clm.augment_ne_data(corpus, annotations, gaz,
                                      cfg.augment_rate, cfg.seed)
            tp.write_corpus(aug, out)
            return {"sentences": len(aug.sentences),
                    "generated": len(aug.sentences) - len(corpus.sentences)}
        text_stage("ne_augment", "45_ne_augmented.txt",
                   {"rate": cfg.augment_rate, "seed": cfg.seed}, do_ne_augment,
                   extra_inputs=[cfg.ne_annotations, cfg.gazetteer])

    corpus_path = current[0]

    # -- pronunciation lexicon
    lex_path, rej_path = r.path("lexicon.txt"), r.path("lexicon_rejects.tsv")

    def do_lexicon():
        corpus = tp.read_clean_corpus(corpus_path)
        lex, rejections = g2p_mod.build_lexicon(set(corpus.vocab), table)
        g2p_mod.write_lexicon(lex, lex_path)
        g2p_mod.write_rejections(rejections, rej_path)
        return {"entries": len(lex), "rejections": len(rejections)}
    r.stage("lexicon", [corpus_path, *g2p_inputs], {}, [lex_path, rej_path],
            do_lexicon)

    # -- word trigram LM
    arpa_path = r.path("model.arpa")

    def do_lm():
        corpus = tp.read_clean_corpus(corpus_path)
        lm = nlm.train_trigram(corpus, smoothing=cfg.smoothing,
                               discount=cfg.discount)
        lm = nlm.prune_to_limits(lm, nlm.LMLimits(
            cfg.max_unigrams, cfg.max_bigrams, cfg.max_trigrams))
        nlm.write_arpa(lm, arpa_path)
        return {f"ngram{n + 1}": len(lm.tables[n]) for n in range(lm.order)}
    r.stage("lm", [corpus_path],
            {"smoothing": cfg.smoothing, "discount": cfg.discount,
             "limits": (cfg.max_unigrams, cfg.max_bigrams, cfg.max_trigrams)},
            [arpa_path], do_lm)

    # -- class-based LM (clustering strategies)
    if cfg.class_strategy in ("expand", "seed", "supervised"):
        cl_paths = [r.path("clusters.tsv"), r.path("class.arpa"),
                    r.path("emissions.tsv")]

        def do_class_lm():
            corpus = tp.read_clean_corpus(corpus_path)
            ne_classes = _load_ne_classes(cfg.ne_classes)
            ne_vocab = {w for ws in ne_classes.values() for w in ws}
            k = min(cfg.clusters_k, len(corpus.vocab))
            window = cfg.brown_window or None
            if cfg.class_strategy == "supervised":
                clustering = clm.supervised_classes(
                    {t: ws for t, ws in ne_classes.items()},
                    set(corpus.vocab))
            elif cfg.class_strategy == "seed":
                seeds = {w: t for t, ws in ne_classes.items()
                         for w in ws if w in corpus.vocab}
                clustering = clm.brown_cluster(corpus, k, seeds=seeds, window=window)
            else:  # expand
                clustering = clm.brown_cluster(corpus, k, window=window)
                new_terms = ne_vocab - set(corpus.vocab)
                if new_terms:
                    clustering = clm.expand_clusters(
                        clustering, new_terms, ne_vocab & set(corpus.vocab))
            class_model = clm.build_class_lm(corpus, clustering,
                                             smoothing=cfg.smoothing,
                                             discount=cfg.discount)
            clm.write_class_lm(class_model, *cl_paths)
            stats = {"clusters": clustering.k}
            if cfg.dev_ne and cfg.dev_general:
                word_lm = nlm.read_arpa(arpa_path)
                mixed = clm.interpolate(class_model, word_lm,
                                        cfg.interpolation_lambda)
                for tag, dev_path in (("ne", cfg.dev_ne), ("general", cfg.dev_general)):
                    dev = tp.read_clean_corpus(dev_path)
                    stats[f"ppl_word_{tag}"] = round(word_lm.perplexity(dev), 4)
                    stats[f"ppl_interp_{tag}"] = round(mixed.perplexity(dev), 4)
            return stats
        r.stage("class_lm",
                [corpus_path, cfg.ne_classes, arpa_path]
                + [p for p in (cfg.dev_ne, cfg.dev_general) if p],
                {"strategy": cfg.class_strategy, "k": cfg.clusters_k,
                 "window": cfg.brown_window, "lambda": cfg.interpolation_lambda,
                 "seed": cfg.seed},
                cl_paths, do_class_lm)

    # -- decoding
    hyp_path = r.path("hyp.txt")
    meta_path = r.path("decode_meta.tsv")
    unmatched_path = r.path("unmatched.tsv")
    utt_input = cfg.cn_input or cfg.phones_input
    if utt_input:
        def do_decode():
            lex = g2p_mod.read_lexicon(lex_path)
            pm = g2p_mod.read_phone_map(cfg.phone_map) if cfg.phone_map else None
            if cfg.cn_input:
                networks = fstd.read_cn_file(cfg.cn_input)
                if pm:
                    networks = [fstd.ConfusionNetwork(
                        [[(p if p == fstd.EPS else pm.mapping[p], w)
                          for p, w in slot] for slot in cn.slots])
                        for cn in networks]
            else:
                seqs = matcher.read_phone_file(cfg.phones_input)
                if pm:
                    seqs = [list(g2p_mod.map_phones(s, pm)) for s in seqs]
                networks = [fstd.ConfusionNetwork.from_phones(s) for s in seqs]

            stats = {"utterances": len(networks), "decoder": cfg.decoder}
            hyps, metas, unmatched = [], [], []
            if cfg.decoder == "fst":
                lm = nlm.read_arpa(arpa_path)
                word_syms = fstd.SymbolTable()
                L = fstd.lexicon_to_fst(lex, cfg.sil_penalty, cfg.sil_phone,
                                        word_syms=word_syms)
                G = fstd.lm_to_fst(lm, word_syms=word_syms)
                budget = fstd.SizeBudget(cfg.max_states, cfg.max_arcs)
                fallbacks = 0
                for cn in networks:
                    res = fstd.decode(cn, L, G, budget, fallback_lexicon=lex)
                    hyps.append(res.words)
                    fallbacks += res.used_fallback
                    metas.append(("fallback-trie" if res.used_fallback else "fst",
                                  res.weight))
                stats.update({"fallbacks": fallbacks,
                              "L_states": L.num_states, "L_arcs": L.num_arcs,
                              "G_states": G.num_states, "G_arcs": G.num_arcs})
            else:
                corpus = tp.read_clean_corpus(corpus_path)
                trie = matcher.build_trie(lex)
                tunings = matcher.TrieTunings(
                    homonym_unigram=dict(corpus.vocab), seed=cfg.seed)
                for cn in networks:
                    phones = cn.best_phones()
                    if cfg.decoder == "trie":
                        words, miss = matcher.trie_decode(phones, trie, tunings)
                    else:
                        words, miss = matcher.lcs_decode(phones, lex)
                    hyps.append(words)
                    unmatched.append(miss)
                    metas.append((cfg.decoder, float(len(miss))))
            matcher.write_word_file(hyps, hyp_path)
            matcher.write_unmatched_report(unmatched, unmatched_path)
            with open(meta_path, "w", encoding="utf-8") as f:
                for i, (status, weight) in enumerate(metas):
                    f.write(f"{i}\t{status}\t{weight!r}\n")
            return stats

        decode_inputs = [utt_input, lex_path, arpa_path, corpus_path]
        if cfg.phone_map:
            decode_inputs.append(cfg.phone_map)
        r.stage("decode", decode_inputs,
                {"decoder": cfg.decoder, "budget": (cfg.max_states, cfg.max_arcs),
                 "sil": (cfg.sil_penalty, cfg.sil_phone), "seed": cfg.seed},
                [hyp_path, meta_path, unmatched_path], do_decode)

        if cfg.durations:
            with open(cfg.durations, encoding="utf-8") as f:
                total_audio = sum(float(x) for x in f.read().split())
            decode_s = r.manifest.timings.get("decode", {}).get("seconds", 0.0)
            if decode_s > 0:
                r.manifest.timings["decode"]["audio_ratio"] = round(
                    total_audio / decode_s, 3)

    # -- scoring
    if cfg.reference and utt_input:
        wer_path = r.path("wer.txt")
        outputs = [wer_path]
        cluster_out = r.path("variant_clusters.txt")
        norm_path = r.path("wer_normalized.txt")
        want_norm = cfg.cluster_variants or cfg.clusters
        if want_norm:
            outputs += [norm_path]
        if cfg.cluster_variants:
            outputs += [cluster_out]

        def do_score():
            with open(cfg.reference, encoding="utf-8") as f:
                refs = [line.split() for line in f]
            with open(hyp_path, encoding="utf-8") as f:
                hyps = [line.split() for line in f]
            report = scoring.score_corpus(refs, hyps)
            scoring.write_wer_report(report, wer_path)
            stats = {"wer": round(report.wer, 6)}
            if want_norm:
                ct = (scoring.read_cost_table(cfg.cost_table)
                      if cfg.cost_table else scoring.DEFAULT_COST_TABLE)
                if cfg.clusters:
                    clusters = scoring.read_clusters(cfg.clusters)
                else:
                    vocab = {scoring.normalize_word(t)
                             for seq in refs + hyps for t in seq}
                    na = scoring.pairwise_distances(
                        vocab, cfg.variant_min_len, cfg.variant_cutoff,
                        ct, cfg.workers)
                    clusters = scoring.grow_clusters(na, cfg.variant_cutoff)
                    scoring.write_clusters(clusters, cluster_out)
                norm = scoring.normalized_corpus_wer(refs, hyps, clusters)
                scoring.write_wer_report(norm, norm_path)
                stats["normalized_wer"] = round(norm.wer, 6)
                stats["variant_clusters"] = len(clusters)
            return stats

        score_inputs = [cfg.reference, hyp_path]
        for opt in (cfg.cost_table, cfg.clusters):
            if opt:
                score_inputs.append(opt)
        r.stage("score", score_inputs,
                {"cluster_variants": cfg.cluster_variants,
                 "cutoff": cfg.variant_cutoff, "min_len": cfg.variant_min_len},
                outputs, do_score)

    write_manifest(r.manifest, r.outdir)
    return r.manifest
