"""Budgeted black-box search over retrieval-augmented generation pipeline configurations."""
from .controllers import ALGORITHMS, DISPLAY_NAMES, REGISTRY, Controller, make_controller, register
from .engine import CacheKey, EvalCache, EvaluationFailure, Limits, RunRecord, TrialRecord, evaluate_config, run_search
from .environment import (Environment, QAItem, CorpusDoc, SyntheticEnvironment, generate_synthetic,
                          load_environment, load_synthetic, make_environment, subsample, synthetic_optimum,
                          synthetic_reward)
from .gateway import Gateway, gateway_from_config, mock_gateway
from .metrics import DEFAULT_WEIGHTS, MetricReport, MetricWeights, score_answer
from .pipeline import IndexCache, run_pipeline
from .space import PipelineConfig, SearchSpace, default_text_space, load_space

__version__ = "0.1.0"
