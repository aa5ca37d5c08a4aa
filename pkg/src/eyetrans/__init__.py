"""eyetrans: gaze-guided Transformer embeddings for code summarization.

The pipeline turns Java-like methods into literal-free ASTs, raw gaze
streams into attention switches between AST nodes, and fuses both into
the input embeddings of small Transformer models for two summarization
tasks. Includes a from-scratch reverse-mode tensor engine, a synthetic
gaze generator, a subtree-permutation augmentor, ROUGE/classification
metrics, and a reproducible experiment workbench.
"""

__version__ = "0.1.0"

from .ast_core import Ast, AstNode, TokenSequence, bfs_serialize, ingest_ast
from .augment import AugmentedSample, augment_dataset, permute_ast, remap_switches
from .embedding import EmbeddingTables, FusionConfig, ablate, fuse
from .gaze import (AttentionSwitch, Fixation, GazeSample, LayoutBox,
                   QualityRating, Trial, classify_ivt, extract_switches,
                   filter_by_quality, layout_tokens, map_fixations,
                   synthesize_gaze)
from .metrics import (classification_report, rouge_l, rouge_n, rouge_report,
                      rouge_s, rouge_su)
from .models import (FunctionalModel, PerturbConfig, Seq2SeqModel, TrainConfig,
                     evaluate, label_paraphrase, perturb_semantic, train)
from .nn import ModelConfig, adam_step, grad_check, multi_head_attention, scaled_dot_attention
from .parser import parse_java_subset
from .tensor import Tape, Tensor, backward

__all__ = [
    "Ast", "AstNode", "TokenSequence", "bfs_serialize", "ingest_ast",
    "AugmentedSample", "augment_dataset", "permute_ast", "remap_switches",
    "EmbeddingTables", "FusionConfig", "ablate", "fuse",
    "AttentionSwitch", "Fixation", "GazeSample", "LayoutBox", "QualityRating",
    "Trial", "classify_ivt", "extract_switches", "filter_by_quality",
    "layout_tokens", "map_fixations", "synthesize_gaze",
    "classification_report", "rouge_l", "rouge_n", "rouge_report", "rouge_s",
    "rouge_su",
    "FunctionalModel", "PerturbConfig", "Seq2SeqModel", "TrainConfig",
    "evaluate", "label_paraphrase", "perturb_semantic", "train",
    "ModelConfig", "adam_step", "grad_check", "multi_head_attention",
    "scaled_dot_attention",
    "Tape", "Tensor", "backward",
    "__version__",
]
