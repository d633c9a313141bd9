"""Adaptive draft-verification decoding with a tri-gram drafter and MCTS draft search."""

from .corpus import CorpusStats, TokenizerMode, TrigramCounts, Vocabulary, count_trigrams, detokenize, tokenize
from .draft_tree import DraftTree, build_tree, mask_of
from .engine import DecodeMetrics, DecodeSession, SessionConfig, Strategy, collect_metrics, decode
from .matrix_io import load_matrix, save_matrix
from .mcts import DraftCandidate, SearchConfig, exploration_constant, puct_score, run_search, visit_distribution
from .target import Distribution, NodeDistributions, OracleModelSpec, RemoteModel, ScriptedModel, build_oracle
from .trigram import AdjustPolicy, TrigramMatrix, adjust_from_recent, conditional, finalize_matrix
from .verify import VerifyOutcome, verify_greedy, verify_sampled

__version__ = "0.1.0"
