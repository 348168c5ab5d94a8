"""Multilingual phoneme language models and LM-fused CTC decoding."""

__version__ = "0.1.0"

from .alphabet import Alphabet, build_alphabet, extend_alphabet, encode_utterance  # noqa: E402
from .lexicon import Lexicon, PrefixTree, build_prefix_tree, parse_lexicon  # noqa: E402
from .lm import LMParams, TrainConfig, adapt, perplexity, plm_large, plm_small, train  # noqa: E402
from .ctc import (BLANK, BOUNDARY, DecodeConfig, DecodeResult, Posteriorgram,  # noqa: E402
                  beam_search_lexicon, beam_search_open, brute_force_decode, decode)
from .evaluate import bootstrap_compare, edit_distance, oov_rate, wer  # noqa: E402
from .data_io import Checkpoint, Corpus, load_checkpoint, save_checkpoint, synth_posteriors  # noqa: E402

__all__ = [
    "Alphabet", "build_alphabet", "extend_alphabet", "encode_utterance",
    "Lexicon", "PrefixTree", "build_prefix_tree", "parse_lexicon",
    "LMParams", "TrainConfig", "adapt", "perplexity", "plm_large", "plm_small", "train",
    "BLANK", "BOUNDARY", "DecodeConfig", "DecodeResult", "Posteriorgram",
    "beam_search_lexicon", "beam_search_open", "brute_force_decode", "decode",
    "bootstrap_compare", "edit_distance", "oov_rate", "wer",
    "Checkpoint", "Corpus", "load_checkpoint", "save_checkpoint", "synth_posteriors",
]
