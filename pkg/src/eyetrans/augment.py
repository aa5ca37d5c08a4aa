"""Dataset growth by recursive subtree permutation.

Permutation shuffles each node's child order but never the parent-child
relation, node ids, categories, or heights, so attention-switch endpoints
stay valid on every variant. Each node draws its shuffle from a sub-seed
keyed by (seed, node_id): editing one part of a tree cannot perturb the
permutations of unrelated nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ast_core import Ast, bfs_serialize, copy_ast
from .gaze import AttentionSwitch, validate_switches


@dataclass
class AugmentedSample:
    base_method_id: str
    variant_index: int  # 0 = the unpermuted original
    ast: Ast
    switches: list[AttentionSwitch] = field(default_factory=list)
    provenance_seed: int = 0

    def dedup_key(self):
        seq = bfs_serialize(self.ast)
        return (tuple(seq.categories),
                frozenset((s.ordinal, s.src, s.dst) for s in self.switches))


def permute_ast(ast: Ast, seed: int) -> Ast:
    """Seeded random permutation of every node's children."""
    out = copy_ast(ast)
    for nid in sorted(out.nodes):
        node = out.nodes[nid]
        if len(node.children) > 1:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, nid))))
            node.children = [node.children[i] for i in rng.permutation(len(node.children))]
    return out


def remap_switches(switches: list[AttentionSwitch],
                   permuted: Ast) -> list[AttentionSwitch]:
    """Carry switches onto a permuted variant.

    Endpoints are node ids and ids survive permutation, so this is the
    identity map; it only validates that no endpoint dangles.
    """
    validate_switches(switches, permuted)
    return list(switches)


def augment_sample(base: AugmentedSample, k_variants: int, seed: int) -> list[AugmentedSample]:
    """Original plus up to ``k_variants`` permuted copies, deduplicated.

    The dedup key is (BFS category sequence, switch set): two samples that
    agree on both are indistinguishable to the model downstream.
    """
    kept: list[AugmentedSample] = []
    seen = set()

    def consider(sample: AugmentedSample) -> None:
        key = sample.dedup_key()
        if key not in seen:
            seen.add(key)
            kept.append(sample)

    consider(base)
    for v in range(1, k_variants + 1):
        sub_seed = _variant_seed(seed, base.base_method_id, v)
        permuted = permute_ast(base.ast, sub_seed)
        consider(AugmentedSample(
            base_method_id=base.base_method_id,
            variant_index=v,
            ast=permuted,
            switches=remap_switches(base.switches, permuted),
            provenance_seed=sub_seed,
        ))
    return kept


def augment_dataset(samples: list[AugmentedSample], k_variants: int,
                    seed: int) -> list[AugmentedSample]:
    if k_variants < 0:
        raise ValueError("k_variants must be >= 0")
    out: list[AugmentedSample] = []
    for base in samples:
        out.extend(augment_sample(base, k_variants, seed))
    return out


def _variant_seed(seed: int, method_id: str, variant: int) -> int:
    # Stable across runs and independent of sample ordering.
    ss = np.random.SeedSequence((seed, variant, *method_id.encode("utf-8")))
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFF)
