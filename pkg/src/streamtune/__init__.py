"""Weighted text sampling for fine-tuning an embedder on drifting text streams."""

from .classifier import IncrementalSVM
from .embedder import EmbedderState, embed, featurize, load_file_embedder
from .finetune import Schedule, TrainReport, finetune
from .harness import RunConfig, RunResult, macro_f1, run_experiment, run_scenario, stratified_stream
from .sampler import ClassFrequencies, SampleRequest, adjust_for_class, normalize, random_sample, weighted_sample
from .synthetic import synth_drift_stream
from .tokenizer import TokenizedText, Vocabulary, pre_tokenize, tokenize, wordpiece_split
from .weighting import build_df, length_weights, tfidf_weights, wp_ratio_weights

__version__ = "0.1.0"
