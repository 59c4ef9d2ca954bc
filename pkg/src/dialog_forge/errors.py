"""Exception types shared across the pipeline."""


class DialogForgeError(Exception):
    """Base class for all errors raised by this package."""


# --- prompt rendering ---

class MissingBinding(DialogForgeError):
    """A template placeholder was left unbound."""


class SlotMismatch(DialogForgeError):
    """Image count does not match the template's image slots."""


# --- agent output parsing ---

class ParseFailure(DialogForgeError):
    """Base class for agent-output parse errors."""


class Unparseable(ParseFailure):
    """Raw text matched neither the question nor the answer pattern."""


class IndexOutOfRange(ParseFailure):
    """A guess index fell outside [1, n_images]."""


# --- backend invocation ---

class BackendError(DialogForgeError):
    """Base class for backend invocation failures."""


class RemoteUnavailable(BackendError):
    """Remote endpoint unreachable after exhausting retries."""


class ProtocolError(BackendError):
    """Remote endpoint returned a malformed or error response."""


class EmptyResponse(BackendError):
    """Backend returned blank text."""


class ScriptExhausted(BackendError):
    """Scripted backend ran out of canned responses."""


# --- corpus ---

class ManifestError(DialogForgeError):
    """Manifest file could not be parsed or violated an invariant."""


class DuplicateId(ManifestError):
    """Two manifest records share an image_id."""


class DanglingContentRef(ManifestError):
    """A content_ref does not resolve (eager verification only)."""


class CorpusMiss(DialogForgeError):
    """A game references an image_id unknown to the corpus."""


class InsufficientCluster(DialogForgeError):
    """No cluster has enough members for the requested game size."""


class InsufficientCorpus(DialogForgeError):
    """Corpus has fewer images than the requested game size."""


class InsufficientFrames(DialogForgeError):
    """No episode/task has enough frames to build a game."""


class MissingEmbedding(DialogForgeError):
    """Similarity grouping requires embeddings on every record."""


# --- game engine / filter ---

class NotSuccessful(DialogForgeError):
    """Replay validation requires a dialog with a Success outcome."""


class ReplayFailed(DialogForgeError):
    """Replay could not obtain a guess after retries."""


# --- dataset builder ---

class NotRetained(DialogForgeError):
    """Training examples may only be extracted from retained dialogs."""


class MissingLabel(DialogForgeError):
    """A record lacks the task_label required by this dataset mode."""


# --- synthetic world ---

class DomainExhausted(DialogForgeError):
    """More distinct attribute tuples requested than the domain holds."""


class UnrecognizedQuestion(DialogForgeError):
    """Question falls outside the oracle's closed grammar."""


class TreeTooLarge(DialogForgeError):
    """Outcome-tree enumeration exceeded the configured node cap."""


# --- orchestration ---

class DependencyUnmet(DialogForgeError):
    """A pipeline stage was run before the stages it depends on."""


class ConfigDrift(DialogForgeError):
    """Resume attempted with a config differing from the run's snapshot."""


class HookFailed(DialogForgeError):
    """External fine-tune hook exited non-zero or returned bad output."""
