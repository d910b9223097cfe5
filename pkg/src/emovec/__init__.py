"""Emotion-intensity control for acoustic models via parameter arithmetic.

Extract an emotion vector as the difference between fine-tuned and
pre-trained model parameters, scale it, and add it onto any compatible
parameter set. Includes a desk-scale validation stack: a deterministic
synthetic corpus, a tiny speaker-conditioned acoustic model, an x-vector
style speaker embedder, and an evaluation harness for same-speaker and
cross-speaker (seen/unseen) use cases.
"""

from .arith import (
    ApplySpec,
    EmotionVector,
    VectorStats,
    apply_vector,
    combine,
    extract_vector,
    load_vector,
    save_vector,
    vector_stats,
)
from .corpus import (
    Corpus,
    CorpusConfig,
    EmotionTransform,
    SpeakerProfile,
    TokenTable,
    Utterance,
    build_corpus,
    load_corpus,
    render_features,
    save_corpus,
)
from .embedder import (
    EmbedderHyper,
    EmbedderModel,
    SpeakerEmbedding,
    embed_utterance,
    secs,
    speaker_vector,
    speaker_vector_table,
    train_embedder,
)
from .errors import (
    BadMagicError,
    CheckpointError,
    CompatibilityError,
    DescriptorError,
    DuplicateNameError,
    EmovecError,
    EmovecWarning,
    HeaderError,
    PayloadError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluate import (
    IntensityEstimator,
    ScenarioReport,
    ScenarioSpec,
    SynthUtterance,
    intensity_ordering_eval,
    read_report,
    run_scenario,
    secs_eval,
    synthesize,
    write_report,
)
from .model import (
    ModelConfig,
    TrainHyper,
    forward,
    init_params,
    loss_and_grad,
    train,
)
from .params import (
    CompatReport,
    ParameterSet,
    TensorEntry,
    check_compatible,
    content_hash,
    load,
    save,
)
from .pipeline import (
    ExperimentConfig,
    load_experiment_config,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ApplySpec",
    "BadMagicError",
    "CheckpointError",
    "CompatReport",
    "CompatibilityError",
    "Corpus",
    "CorpusConfig",
    "DescriptorError",
    "DuplicateNameError",
    "EmbedderHyper",
    "EmbedderModel",
    "EmotionTransform",
    "EmotionVector",
    "EmovecError",
    "EmovecWarning",
    "ExperimentConfig",
    "HeaderError",
    "IntensityEstimator",
    "ModelConfig",
    "ParameterSet",
    "PayloadError",
    "ScenarioReport",
    "ScenarioSpec",
    "SpeakerEmbedding",
    "SpeakerProfile",
    "SynthUtterance",
    "TensorEntry",
    "TokenTable",
    "TrainHyper",
    "TrainingDivergedError",
    "Utterance",
    "ValidationError",
    "VectorStats",
    "apply_vector",
    "build_corpus",
    "check_compatible",
    "combine",
    "content_hash",
    "embed_utterance",
    "extract_vector",
    "forward",
    "init_params",
    "intensity_ordering_eval",
    "load",
    "load_corpus",
    "load_experiment_config",
    "load_vector",
    "loss_and_grad",
    "read_report",
    "render_features",
    "run_experiment",
    "run_scenario",
    "save",
    "save_corpus",
    "save_vector",
    "secs",
    "secs_eval",
    "speaker_vector",
    "speaker_vector_table",
    "synthesize",
    "train",
    "train_embedder",
    "vector_stats",
    "write_report",
]
