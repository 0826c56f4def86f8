"""Image captioning with a gated global feature, soft attention and a gated-feedback LSTM."""

from .data import FeatureRecord, Vocabulary, build_vocab, encode_caption, preprocess
from .decode import beam_decode, corpus_bleu, greedy_decode
from .model import Forcing, Mode, ModelConfig, backward, forward, init_params, set_mode
from .numeric import ParameterStore, finite_diff_check
from .training import OptimizerState, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
