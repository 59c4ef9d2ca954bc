"""dialog-forge: self-play dialog-game data engine.

Generates reference-game dialogs between a describer and a guesser over
pluggable vision-language backends, filters them by permutation
consistency, packages SFT datasets, and evaluates game success, VQA
accuracy, and robotics success detection.
"""

from .backends import (
    CallableEndpoint,
    RecordingEndpoint,
    RemoteEndpoint,
    ScriptedEndpoint,
    invoke,
)
from .corpus import (
    Corpus,
    ImageRecord,
    group_by_cluster,
    group_by_similarity,
    group_episode_frames,
    group_random,
    load_manifest,
    save_manifest,
)
from .datasets import (
    TrainingExample,
    build_description_sft,
    build_self_qa_dataset,
    build_sft_dataset,
    extract_examples,
)
from .engine import (
    DialogRecord,
    GameSpec,
    Outcome,
    ReplayResult,
    Turn,
    replay_guess,
    run_game,
)
from .evaluation import (
    Episode,
    GameSuccessStats,
    VqaItem,
    game_success_rate,
    normalize_count,
    normalize_yes_no,
    score_vqa,
    success_detection_eval,
)
from .filtering import (
    ValidationReport,
    filter_corpus,
    permutations_for,
    validate_dialog,
)
from .parsing import Guess, Question, parse_guesser_output, parse_qa_pair
from .prompts import (
    EVALUATION_SAMPLING,
    GENERATION_SAMPLING,
    ImageRef,
    PromptPayload,
    Role,
    SamplingParams,
    render_prompt,
)
from .synthworld import (
    DomainSpec,
    GuesserStrategy,
    OracleDescriber,
    OracleGuesser,
    OraclePolicy,
    expected_success,
    gen_world,
    oracle_describe,
    oracle_guess_step,
)

__version__ = "0.1.0"

__all__ = [
    "CallableEndpoint",
    "Corpus",
    "DialogRecord",
    "DomainSpec",
    "EVALUATION_SAMPLING",
    "Episode",
    "GENERATION_SAMPLING",
    "GameSpec",
    "GameSuccessStats",
    "Guess",
    "GuesserStrategy",
    "ImageRecord",
    "ImageRef",
    "OracleDescriber",
    "OracleGuesser",
    "OraclePolicy",
    "Outcome",
    "PromptPayload",
    "Question",
    "RecordingEndpoint",
    "RemoteEndpoint",
    "ReplayResult",
    "Role",
    "SamplingParams",
    "ScriptedEndpoint",
    "TrainingExample",
    "Turn",
    "ValidationReport",
    "VqaItem",
    "build_description_sft",
    "build_self_qa_dataset",
    "build_sft_dataset",
    "expected_success",
    "extract_examples",
    "filter_corpus",
    "game_success_rate",
    "gen_world",
    "group_by_cluster",
    "group_by_similarity",
    "group_episode_frames",
    "group_random",
    "invoke",
    "load_manifest",
    "normalize_count",
    "normalize_yes_no",
    "oracle_describe",
    "oracle_guess_step",
    "parse_guesser_output",
    "parse_qa_pair",
    "permutations_for",
    "render_prompt",
    "replay_guess",
    "run_game",
    "save_manifest",
    "score_vqa",
    "success_detection_eval",
    "validate_dialog",
]
