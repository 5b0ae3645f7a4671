"""Memory-augmented autoencoders trained with an information-theoretic compression loss."""

from .codec import MlpCodec, TabularCodec, conditional_likelihood, decode_probs, encode, optimal_tabular_decoder
from .datasets import EventTable, SampleStream, four_state_table, playing_cards_table
from .errors import DomainError, GuardError, NumericError, ParseError
from .info import ProbDist, cross_entropy, entropy, max_entropy, redundancy, self_information
from .loss import LossBreakdown, LossWeights, expected_loss, sample_loss
from .oracle import OracleProblem, solve
from .store import MemoryStore, NeighborhoodSpec
from .trainer import TrainConfig, run_training

__version__ = "0.1.0"
