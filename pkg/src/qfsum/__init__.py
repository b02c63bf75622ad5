"""Query-focused summarization with answer-relevance-biased cross-attention."""

from .inputs import FormattedInput, InputLayout, format_input
from .model import ModelConfig, ModelParams, beam_search, forward, greedy_decode
from .qa import LexicalOverlapScorer, PrecomputedScorer, extract_answer_span, make_scorer
from .relevance import (AttentionBias, RelevanceProfile, build_bias_matrix,
                        confidence_score, word_relevance)
from .vocab import Vocab

__version__ = "0.1.0"

__all__ = [
    "AttentionBias",
    "FormattedInput",
    "InputLayout",
    "LexicalOverlapScorer",
    "ModelConfig",
    "ModelParams",
    "PrecomputedScorer",
    "RelevanceProfile",
    "Vocab",
    "beam_search",
    "build_bias_matrix",
    "confidence_score",
    "extract_answer_span",
    "format_input",
    "forward",
    "greedy_decode",
    "make_scorer",
    "word_relevance",
    "__version__",
]
