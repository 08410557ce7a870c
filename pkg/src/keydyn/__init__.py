"""Passive PIN authentication from keystroke dynamics.

Touch events for a PIN entry become a fixed-length feature vector (hold
times, touch positions, force, and inter-key timings), vectors are smoothed
through a weighted history buffer, each buffered vector is drawn as markers
on an image, and a small one-class network learns the shape of one user's
genuine images.  Authentication scores a new entry by its embedding's
distance from the learned center.
"""

from .errors import (
    ConfigError,
    DegeneratePcaError,
    InsufficientDataError,
    KeydynError,
    NotCalibratedError,
    SampleInvariantError,
    SampleSchemaError,
    TrainingDivergedError,
)
from .events import (
    DEFAULT_PIN_LENGTH,
    FeatureLayout,
    FeatureVector,
    KeyEvent,
    KeystrokeSample,
    extract_features,
    extract_features_matrix,
    feature_layout,
    read_samples_jsonl,
    sample_from_dict,
    sample_to_dict,
    validate_sample,
    write_samples_jsonl,
)
from .preprocess import (
    DEFAULT_BUFFER_SIZE,
    MinMaxNormalizer,
    SampleBuffer,
    Standardizer,
    augment,
    buffer_weights,
    fit_minmax,
    fit_standardizer,
    weighted_merge,
)
from .encoding import (
    CanvasConfig,
    EncodedImage,
    PcaAttributeMap,
    encode_gaf,
    encode_mtf,
    encode_rp,
    fit_pca,
    gaf_matrix,
    keystroke_slices,
    mtf_matrix,
    recurrence_matrix,
    render,
)
from .neural import (
    AutoencoderModel,
    Decision,
    SvddModel,
    SvddNetwork,
    ae_score,
    decide,
    init_center,
    load_model,
    save_model,
    score,
    train_autoencoder,
    train_svdd,
)
from .evaluation import (
    EvalReport,
    FittedPipeline,
    Metrics,
    PipelineConfig,
    compute_eer,
    compute_metrics,
    fit_pipeline,
    load_config,
    run_experiment,
    validate_config,
)
from .synthdata import Cohort, UserProfile, generate_cohort, make_profile
from .matrixio import read_matrix, write_matrix

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
