"""promptveil: privacy-preserving word replacement for LLM prompts.

Rewrites privacy-sensitive words into semantically distant but
task-preserving alternatives chosen by surrogate-model gradient feedback,
and ships the adversary harness and utility evaluation needed to measure
the privacy/utility trade-off.
"""

from .core import (
    Candidate,
    MaskPlan,
    ObfuscationConfig,
    Replacement,
    TokenizedPrompt,
    detokenize,
    tokenize,
)
from .candidate_generation import (
    CandidateSet,
    MlmProvider,
    embedding_distance,
    filter_candidates,
    predict_candidates,
)
from .obfuscator import (
    BatchOutcome,
    ObfuscationResult,
    Providers,
    desensitize,
    desensitize_batch,
)
from .privacy_detection import (
    EntitySpan,
    NerProvider,
    TfidfModel,
    build_mask_plan,
    detect_explicit_spans,
    fit_tfidf,
    tfidf_score,
)
from .surrogate import SurrogateModel, TaskTarget, gradient_norm, select_replacement
from .attacks import (
    AttackReport,
    ei_attack,
    mti_attack,
    pii_inference_attack,
    random_perturbation_baseline,
    topk_accuracy,
)
from .evaluation import (
    ChatClient,
    CallableChatClient,
    DEFAULT_TEMPLATES,
    TaskTemplate,
    UtilityReport,
    judge_quality,
    run_task,
)
from .datasets import (
    LabeledExample,
    PortraitCategories,
    PortraitProfile,
    generate_portrait,
    load_corpus,
    sample_profile,
    save_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "AttackReport",
    "BatchOutcome",
    "CallableChatClient",
    "Candidate",
    "CandidateSet",
    "ChatClient",
    "DEFAULT_TEMPLATES",
    "EntitySpan",
    "LabeledExample",
    "MaskPlan",
    "MlmProvider",
    "NerProvider",
    "ObfuscationConfig",
    "ObfuscationResult",
    "PortraitCategories",
    "PortraitProfile",
    "Providers",
    "Replacement",
    "SurrogateModel",
    "TaskTarget",
    "TaskTemplate",
    "TfidfModel",
    "TokenizedPrompt",
    "UtilityReport",
    "build_mask_plan",
    "desensitize",
    "desensitize_batch",
    "detect_explicit_spans",
    "detokenize",
    "ei_attack",
    "embedding_distance",
    "filter_candidates",
    "fit_tfidf",
    "generate_portrait",
    "gradient_norm",
    "judge_quality",
    "load_corpus",
    "mti_attack",
    "pii_inference_attack",
    "predict_candidates",
    "random_perturbation_baseline",
    "run_task",
    "sample_profile",
    "save_corpus",
    "select_replacement",
    "tfidf_score",
    "tokenize",
    "topk_accuracy",
]
