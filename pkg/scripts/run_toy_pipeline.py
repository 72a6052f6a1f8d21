#!/usr/bin/env python3
"""Generate a tiny self-contained fixture and run the full pipeline on it.

Writes the fixture and all artifacts under the given directory, runs the
pipeline twice, and verifies the second run skips every stage.
"""

import argparse
import json
from pathlib import Path

from phone2word.pipeline import PipelineConfig, run_pipeline

CORPUS = """\
kata zu kuzu.
zu kata taza
ka taza zu
kata zu ka
uk zu kata
taza uk kuzu
ka zu. kata taza
zu zu kata
kuzu taza kata zu
zu kuzu ka
"""

G2P = "k\tk\na\ta\nt\tt\nz\tz\nu\tu\n"
GAZETTEER = "kuzu\tloc\ntaza kuzu\tloc\n"
CNS = """\
k:0.10 t:0.7
a:0.05
t:0.3 z:0.6 <eps>:0.9
a:0.1 u:1.0

z:0.05
u:0.05
"""
REF = "kata zu\nzu\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", default="toy_run", help="working directory")
    parser.add_argument("--decoder", default="fst", choices=("trie", "lcs", "fst"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    root = Path(args.dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "corpus.txt").write_text(CORPUS, encoding="utf-8")
    (root / "g2p.tsv").write_text(G2P, encoding="utf-8")
    (root / "gazetteer.txt").write_text(GAZETTEER, encoding="utf-8")
    (root / "cns.txt").write_text(CNS, encoding="utf-8")
    (root / "ref.txt").write_text(REF, encoding="utf-8")

    cfg = PipelineConfig(
        corpus=str(root / "corpus.txt"), g2p_table=str(root / "g2p.tsv"),
        gazetteer=str(root / "gazetteer.txt"), cn_input=str(root / "cns.txt"),
        reference=str(root / "ref.txt"), outdir=str(root / "out"),
        casing="lowercase", boundary_marks=".", gazetteer_copies=3,
        decoder=args.decoder, seed=args.seed)
    manifest = run_pipeline(cfg)
    print("first run:")
    for name, timing in manifest.timings.items():
        stats = manifest.stages[name]["stats"]
        print(f"  {name}: {timing['seconds']}s {json.dumps(stats)}")

    rerun = run_pipeline(cfg)
    skipped = [n for n, t in rerun.timings.items() if t["skipped"]]
    print(f"second run: skipped {len(skipped)}/{len(rerun.timings)} stages")
    print(f"hypothesis: {(root / 'out' / 'hyp.txt').read_text(encoding='utf-8')!r}")


if __name__ == "__main__":
    main()
