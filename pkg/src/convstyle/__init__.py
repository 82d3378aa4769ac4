"""Graph-based multi-modal conversational context modeling.

Predicts the style-token weight vector of a conversation's next utterance
from the five preceding utterances (text, style vectors, speaker labels),
and bundles the GRU baseline plus the ablation variants needed to rerun
the model comparison as an ordering experiment on synthetic corpora.
"""

__version__ = "0.1.0"

from .corpus import (Chunk, Conversation, Utterance, corpus_stats, load_corpus,
                     make_chunks, save_corpus)
from .features import FeatureConfig
from .graph import ConversationGraph, RelationType, build_graph, edge_attention
from .model import ModelConfig, Variant, forward, init_params
from .synthetic import SynthConfig, generate_synthetic
from .training import (MetricsReport, TrainConfig, compare_variants, evaluate,
                       split_conversations, train)

__all__ = [
    "Chunk", "Conversation", "ConversationGraph", "FeatureConfig",
    "MetricsReport", "ModelConfig", "RelationType", "SynthConfig",
    "TrainConfig", "Utterance", "Variant", "build_graph", "compare_variants",
    "corpus_stats", "edge_attention", "evaluate", "forward",
    "generate_synthetic", "init_params", "load_corpus", "make_chunks",
    "save_corpus", "split_conversations", "train",
]
