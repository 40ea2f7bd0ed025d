"""Proto-word reconstruction toolkit for Romance cognate sets.

A character-level multi-source GRU encoder-decoder with dot-product
attention reconstructs Latin words from daughter-language cognates,
together with the evaluation apparatus around it: edit-distance metrics,
a sound-change rule harness with a synthetic corpus generator, Ward
clustering of learned phoneme representations, and attention-pattern
summaries.
"""

from .corpus import (
    DAUGHTERS,
    CognateSet,
    EncodedExample,
    Language,
    ParseError,
    ValidationError,
    Vocabulary,
    Word,
    apply_variant,
    build_vocab,
    encode_example,
    parse_dataset,
    serialize_dataset,
    split,
)
from .autodiff import Adam, Tape, Tensor, backward
from .metrics import (
    EditDistanceReport,
    EditOp,
    align,
    edit_distance,
    normalized_edit_distance,
    report,
    substitution_matrix,
)
from .model import (
    AttentionTrace,
    Model,
    ModelConfig,
    ModelParams,
    attend,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import TrainConfig, TrainResult, evaluate, predict, train
from .rules import (
    RuleOutcome,
    SoundRule,
    builtin_rules,
    deterministic_rules,
    generate_synthetic_corpus,
    make_rule_testset,
    score_rule_prediction,
)
from .analysis import (
    AttentionSummary,
    Dendrogram,
    attention_summary,
    export_dendrogram,
    extract_embeddings,
    ward_clustering,
)

__version__ = "0.1.0"
