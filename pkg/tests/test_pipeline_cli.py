import json
import subprocess
import sys

import pytest

from phone2word import cli
from phone2word import pipeline as pl


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


CORPUS = """\
kata zu muri kigali.
zu kata neza
ka taza zu
kata zu ka
uk zu kata
taza uk neza
ka zu. kata taza
zu zu kata
yesu amen yesu amen
kuzu taza kata zu
zu kuzu ka
kata kuzu zu taza
uk kuzu zu
taza zu zu
kata zu taza kuzu
ka uk zu
zu taza kata
kuzu kata zu
uk kata zu neza
zu kata kuzu
"""

G2P = "k\tk\na\ta\nt\tt\nz\tz\nu\tu\n"

GAZETTEER = "kigali\tloc\nmuri kigali\tloc\nkuzu\tloc\n"

STOPLIST = "yesu\namen\n"

CNS = """\
k:0.10 t:0.7
a:0.05
t:0.3 z:0.6 <eps>:0.9
a:0.1 u:1.0

k:0.4 z:0.45
a:0.4 u:0.45

k:0.02
a:0.4 u:0.6
t:0.1
a:0.2 z:0.9
"""

REF = """\
kata zu
zu
kata
"""


def make_fixture(tmp_path):
    files = {
        "corpus": write(tmp_path / "corpus.txt", CORPUS),
        "g2p": write(tmp_path / "g2p.tsv", G2P),
        "gazetteer": write(tmp_path / "gazetteer.txt", GAZETTEER),
        "stoplist": write(tmp_path / "stoplist.txt", STOPLIST),
        "cns": write(tmp_path / "cns.txt", CNS),
        "ref": write(tmp_path / "ref.txt", REF),
    }
    return files


def make_config(files, outdir, **overrides):
    cfg = dict(
        corpus=files["corpus"], g2p_table=files["g2p"],
        gazetteer=files["gazetteer"], stoplist=files["stoplist"],
        cn_input=files["cns"], reference=files["ref"],
        outdir=str(outdir), casing="lowercase", boundary_marks=".",
        gazetteer_copies=3, decoder="fst", seed=7)
    cfg.update(overrides)
    return pl.PipelineConfig(**cfg)


class TestRunPipeline:
    def test_end_to_end_deterministic(self, tmp_path):
        files = make_fixture(tmp_path)
        m1 = pl.run_pipeline(make_config(files, tmp_path / "run1"))
        m2 = pl.run_pipeline(make_config(files, tmp_path / "run2"))
        for name in ("hyp.txt", "manifest.json", "model.arpa", "lexicon.txt"):
            a = (tmp_path / "run1" / name).read_bytes()
            b = (tmp_path / "run2" / name).read_bytes()
            assert a == b, name
        assert not any(t["skipped"] for t in m1.timings.values())

    def test_rerun_skips_all_stages(self, tmp_path):
        files = make_fixture(tmp_path)
        cfg = make_config(files, tmp_path / "run")
        pl.run_pipeline(cfg)
        manifest_before = (tmp_path / "run" / "manifest.json").read_bytes()
        m2 = pl.run_pipeline(make_config(files, tmp_path / "run"))
        assert all(t["skipped"] for t in m2.timings.values())
        assert (tmp_path / "run" / "manifest.json").read_bytes() == manifest_before

    def test_changed_input_invalidates_downstream(self, tmp_path):
        files = make_fixture(tmp_path)
        pl.run_pipeline(make_config(files, tmp_path / "run"))
        write(tmp_path / "corpus.txt", CORPUS + "kata zu kuzu\n")
        m2 = pl.run_pipeline(make_config(files, tmp_path / "run"))
        assert not m2.timings["clean"]["skipped"]
        assert not m2.timings["lm"]["skipped"]

    def test_missing_file_fails_validation_before_stages(self, tmp_path):
        files = make_fixture(tmp_path)
        cfg = make_config(files, tmp_path / "run", g2p_table=str(tmp_path / "nope.tsv"))
        with pytest.raises(pl.ValidationError):
            pl.run_pipeline(cfg)
        assert not (tmp_path / "run" / "manifest.json").exists()

    def test_manifest_lists_every_artifact(self, tmp_path):
        files = make_fixture(tmp_path)
        manifest = pl.run_pipeline(make_config(files, tmp_path / "run"))
        produced = {p for rec in manifest.stages.values() for p in rec["outputs"]}
        assert produced == set(manifest.artifacts)
        for rel in manifest.artifacts:
            assert (tmp_path / "run" / rel).exists()

    def test_decoder_choices_differ(self, tmp_path):
        files = make_fixture(tmp_path)
        outs = {}
        for decoder in ("trie", "lcs", "fst"):
            pl.run_pipeline(make_config(files, tmp_path / decoder, decoder=decoder))
            outs[decoder] = (tmp_path / decoder / "hyp.txt").read_text(encoding="utf-8")
        assert outs["fst"]  # non-empty
        assert outs["trie"] != outs["lcs"] or outs["trie"] != outs["fst"]

    def test_stage_isolation_decode(self, tmp_path):
        files = make_fixture(tmp_path)
        run = tmp_path / "run"
        pl.run_pipeline(make_config(files, run))
        out = tmp_path / "standalone.txt"
        rc = cli.main([
            "decode", "--lexicon", str(run / "lexicon.txt"),
            "--arpa", str(run / "model.arpa"), "--cn", files["cns"],
            "--decoder", "fst", "--out", str(out)])
        assert rc == 0
        assert out.read_text(encoding="utf-8") == \
            (run / "hyp.txt").read_text(encoding="utf-8")

    def test_supervised_class_strategy(self, tmp_path):
        files = make_fixture(tmp_path)
        ne = write(tmp_path / "ne.tsv", "kigali\tloc\nkuzu\tloc\n")
        dev = write(tmp_path / "dev.txt", "kata zu\nzu kuzu\n")
        cfg = make_config(files, tmp_path / "run", class_strategy="supervised",
                          ne_classes=ne, dev_ne=dev, dev_general=dev)
        manifest = pl.run_pipeline(cfg)
        stats = manifest.stages["class_lm"]["stats"]
        assert stats["clusters"] > 0
        assert "ppl_interp_ne" in stats
        assert (tmp_path / "run" / "class.arpa").exists()

    def test_augment_strategy_grows_corpus(self, tmp_path):
        files = make_fixture(tmp_path)
        # the annotation indexes the cleaned corpus fed into augmentation
        ann = write(tmp_path / "ann.tsv", "0\t0\t1\tloc\n")
        cfg = make_config(files, tmp_path / "run", class_strategy="augment",
                          ne_annotations=ann, augment_rate=0.2)
        manifest = pl.run_pipeline(cfg)
        assert manifest.stages["ne_augment"]["stats"]["generated"] > 0

    def test_variant_scoring(self, tmp_path):
        files = make_fixture(tmp_path)
        cfg = make_config(files, tmp_path / "run", cluster_variants=True)
        manifest = pl.run_pipeline(cfg)
        assert "normalized_wer" in manifest.stages["score"]["stats"]
        assert (tmp_path / "run" / "wer_normalized.txt").exists()

    def test_loanword_table_overrides_rules(self, tmp_path):
        files = make_fixture(tmp_path)
        loan = write(tmp_path / "loan.tsv", "k\tq\n")
        cfg = make_config(files, tmp_path / "run", loanword_g2p=loan)
        pl.run_pipeline(cfg)
        lex = (tmp_path / "run" / "lexicon.txt").read_text(encoding="utf-8")
        assert "kata\tq a t a" in lex

    def test_durations_give_throughput_ratio(self, tmp_path):
        files = make_fixture(tmp_path)
        durations = write(tmp_path / "dur.txt", "10.0\n12.0\n8.0\n")
        cfg = make_config(files, tmp_path / "run", durations=durations)
        manifest = pl.run_pipeline(cfg)
        assert manifest.timings["decode"]["audio_ratio"] > 0

    def test_phones_input_with_phone_map(self, tmp_path):
        files = make_fixture(tmp_path)
        # source-inventory phones collapse many-to-one onto lexicon phones
        phones = write(tmp_path / "phones.txt", "K A T A\nZ U\nZh U\n")
        pmap = write(tmp_path / "pmap.tsv",
                     "K\tk\nA\ta\nT\tt\nZ\tz\nZh\tz\nU\tu\n")
        cfg = make_config(files, tmp_path / "run", cn_input=None,
                          phones_input=phones, phone_map=pmap)
        pl.run_pipeline(cfg)
        hyp = (tmp_path / "run" / "hyp.txt").read_text(encoding="utf-8")
        assert hyp == "kata\nzu\nzu\n"


class TestConfigFile:
    def test_parse_and_types(self, tmp_path):
        path = write(tmp_path / "cfg", (
            "# comment\n"
            "corpus = c.txt\n"
            "gazetteer_copies = 12\n"
            "discount = 0.4  # inline comment\n"
            "cluster_variants = true\n"))
        values = pl.read_config(path)
        cfg = pl.config_from_dict(values)
        assert cfg.gazetteer_copies == 12
        assert cfg.discount == 0.4
        assert cfg.cluster_variants is True

    def test_unknown_key_rejected(self):
        with pytest.raises(pl.ValidationError):
            pl.config_from_dict({"no_such_option": "1"})

    def test_bad_line_rejected(self, tmp_path):
        path = write(tmp_path / "cfg", "just some words\n")
        with pytest.raises(pl.ValidationError):
            pl.read_config(path)


class TestCli:
    def test_score_identical_files(self, tmp_path, capsys):
        ref = write(tmp_path / "r.txt", "kata zu\nzu\n")
        rc = cli.main(["score", "--ref", ref, "--hyp", ref])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "wer=0.0%"

    def test_score_reports_errors(self, tmp_path, capsys):
        ref = write(tmp_path / "r.txt", "kata zu\n")
        hyp = write(tmp_path / "h.txt", "kata ka\n")
        rc = cli.main(["score", "--ref", ref, "--hyp", hyp])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "wer=50.0%"

    def test_budget_exceeded_exit_code(self, tmp_path, capsys):
        files = make_fixture(tmp_path)
        run = tmp_path / "run"
        pl.run_pipeline(make_config(files, run))
        rc = cli.main(["build-graph", "--lexicon", str(run / "lexicon.txt"),
                       "--arpa", str(run / "model.arpa"),
                       "--out", str(tmp_path / "g"), "--max-arcs", "10"])
        assert rc == 4

    def test_build_graph_writes_fsts(self, tmp_path, capsys):
        files = make_fixture(tmp_path)
        run = tmp_path / "run"
        pl.run_pipeline(make_config(files, run))
        rc = cli.main(["build-graph", "--lexicon", str(run / "lexicon.txt"),
                       "--arpa", str(run / "model.arpa"),
                       "--out", str(tmp_path / "g")])
        assert rc == 0
        for suffix in (".L.fst", ".G.fst", ".LG.fst", ".phones.syms", ".words.syms"):
            assert (tmp_path / f"g{suffix}").exists()

    def test_clean_subcommand(self, tmp_path, capsys):
        files = make_fixture(tmp_path)
        out = tmp_path / "clean.txt"
        rc = cli.main(["clean", "--corpus", files["corpus"], "--g2p", files["g2p"],
                       "--casing", "lowercase", "--stoplist", files["stoplist"],
                       "--out", str(out)])
        assert rc == 0
        text = out.read_text(encoding="utf-8")
        assert "yesu" not in text
        assert "kata zu" in text

    def test_decoder_contrast_on_overshoot_fixture(self, tmp_path):
        lex = write(tmp_path / "lex.tsv", "a\ta\nab\ta b\nba\tb a\n")
        phones = write(tmp_path / "p.txt", "a b a\n")
        outs = {}
        for decoder in ("trie", "lcs"):
            out = tmp_path / f"{decoder}.txt"
            rc = cli.main(["decode", "--lexicon", lex, "--phones", phones,
                           "--decoder", decoder, "--out", str(out)])
            assert rc == 0
            outs[decoder] = out.read_text(encoding="utf-8")
        assert outs["trie"] == "ab a\n"
        assert outs["lcs"] == "ab\n"

    def test_validation_exit_code(self, tmp_path, capsys):
        rc = cli.main(["run", "--config", str(tmp_path / "missing.cfg")])
        assert rc == 3

    def test_run_subcommand_with_config(self, tmp_path, capsys):
        files = make_fixture(tmp_path)
        cfg = write(tmp_path / "p2w.cfg", (
            f"corpus = {files['corpus']}\n"
            f"g2p_table = {files['g2p']}\n"
            f"cn_input = {files['cns']}\n"
            f"reference = {files['ref']}\n"
            f"outdir = {tmp_path / 'out'}\n"
            "casing = lowercase\n"
            "decoder = fst\n"))
        rc = cli.main(["run", "--config", cfg, "seed=3"])
        assert rc == 0
        data = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert data["seed"] == 3
        assert "decode" in data["stages"]

    def test_cluster_variants_subcommand(self, tmp_path, capsys):
        words = write(tmp_path / "w.txt", "bwindwara\nbw’indwara\nzzzzzzzz\n")
        out = tmp_path / "clusters.txt"
        rc = cli.main(["cluster-variants", "--words", words, "--out", str(out)])
        assert rc == 0
        assert "bwindwara" in out.read_text(encoding="utf-8")

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as e:
            cli.main(["no-such-command"])
        assert e.value.code == 2

    def test_stage_isolation_build_lm(self, tmp_path):
        files = make_fixture(tmp_path)
        run = tmp_path / "run"
        pl.run_pipeline(make_config(files, run))
        out = tmp_path / "standalone.arpa"
        rc = cli.main(["build-lm", "--corpus", str(run / "40_gazetteer.txt"),
                       "--out", str(out)])
        assert rc == 0
        assert out.read_bytes() == (run / "model.arpa").read_bytes()

    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "phone2word.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "decode" in proc.stdout
