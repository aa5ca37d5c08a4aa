#!/usr/bin/env python3
"""Grow the bundled micro-corpus with subtree permutations and build the
train/test dataset with synthetic gaze, mirroring the `eyetrans dataset`
command."""

from eyetrans.ast_core import bfs_serialize
from eyetrans.augment import AugmentedSample, augment_sample
from eyetrans.dataset import build_dataset, builtin_corpus, synthesize_trials
from eyetrans.gaze import synthesize_gaze

methods = builtin_corpus()
print(f"micro-corpus: {len(methods)} methods, "
      f"{sum(len(m.nodes) for m in methods)} nodes total")

# One method, one synthetic trial, a handful of permuted variants
ast = methods[0]
switches = synthesize_gaze(ast, mode="markov", seed=7, n_fixations=15)
base = AugmentedSample(ast.method_id, 0, ast, switches)
variants = augment_sample(base, k_variants=5, seed=11)
print(f"\n{ast.method_id}: {len(variants)} distinct variants after dedup")
for v in variants:
    head = bfs_serialize(v.ast).node_ids[:8]
    print(f"  v{v.variant_index}: BFS head {head}")

# Full pipeline: synthetic participants, quality tiers, 80/20 split
records = synthesize_trials(methods, participants=5, seed=3)
for tier in ("original", "filtered", "strict"):
    bundle = build_dataset(records, tier=tier, augment_k=3, seed=3)
    m = bundle.manifest
    print(f"\ntier={tier}: train={m['n_train']} test={m['n_test']} "
          f"counts={m['counts']}")
