"""Zero-shot recommendation by language-model prompt likelihood.

Items are ranked for a user by the log-likelihood a language model assigns
to a prompt listing the user's liked items followed by the candidate
("Matrix, Inception, <candidate>"). Includes a BPR matrix-factorization
baseline, a corpus prompt miner and a MAP@1 evaluation harness.
"""

from .dataset import DatasetConfig, EvalInstance, Item, Rating, UserProfile
from .prompt import Prompt, PromptTemplate, builtin_templates, render
from .scorer import NgramModel, RandomScorer, RemoteScorer, SequenceScore, fit_ngram

__version__ = "0.1.0"

__all__ = [
    "DatasetConfig",
    "EvalInstance",
    "Item",
    "NgramModel",
    "Prompt",
    "PromptTemplate",
    "RandomScorer",
    "Rating",
    "RemoteScorer",
    "SequenceScore",
    "UserProfile",
    "builtin_templates",
    "fit_ngram",
    "render",
]
