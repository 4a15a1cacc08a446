"""Exception types raised across the package."""


class DociclError(Exception):
    """Base class for every error this package raises on purpose."""


# --- dataset ---------------------------------------------------------------

class ParseError(DociclError):
    """Input file or directory could not be parsed."""


class ValidationError(DociclError):
    """A document or entity violates a model invariant."""


class UnsupportedFormat(DociclError):
    """Unknown dataset format name."""


class NoDonorError(DociclError):
    """Text replacement found no donor entity for some label."""


class DonorTooSmall(DociclError):
    """Layout donor has fewer entities than the receiving document."""


# --- layout ----------------------------------------------------------------

class EmptyBoxList(DociclError):
    """An operation that needs at least one box received none."""


class InvalidTarget(DociclError):
    """Resize target dimensions are not positive."""


class DimensionMismatch(DociclError):
    """Two layout images being compared have different sizes."""


# --- embedding -------------------------------------------------------------

class ProviderError(DociclError):
    """Embedding provider failed after the configured retries."""


class DimMismatch(DociclError):
    """Vectors being compared have different dimensions."""


class ProviderMismatch(DociclError):
    """Vectors being compared come from different providers."""


class ZeroVector(DociclError):
    """Cosine similarity is undefined for an all-zero vector."""


# --- selection -------------------------------------------------------------

class PoolEmpty(DociclError):
    """Candidate pool for a selector is empty."""


# --- prompt ----------------------------------------------------------------

class MissingLabel(DociclError):
    """A demonstration line needs a gold label the entity lacks."""


class LengthMismatch(DociclError):
    """Parallel sequences (boxes vs entities, paired samples) differ in length."""


# --- llm -------------------------------------------------------------------

class LLMError(DociclError):
    """Base class for completion-client failures."""


class TransportError(LLMError):
    """Request could not be completed after retries."""


class RateLimited(LLMError):
    """Provider reported rate limiting and retries were exhausted."""


class ContextOverflow(LLMError):
    """Provider rejected the request as exceeding its context window."""


class MalformedOutput(LLMError):
    """Every generation attempt failed output validation.

    Carries the raw text of all attempts for audit.
    """

    def __init__(self, message: str, attempts):
        super().__init__(message)
        self.attempts = list(attempts)


class BudgetUnsatisfiable(LLMError):
    """No fallback example count brings the prompt under the token limit."""


class UnknownDataset(DociclError):
    """Dataset name has no built-in defaults."""


# --- evaluation ------------------------------------------------------------

class NoParsableLines(DociclError):
    """LLM output contained no line matching the entity-line grammar."""


class MissingGold(DociclError):
    """Scoring requires gold labels the document does not carry."""


class AllZeroDifferences(DociclError):
    """Every paired difference is zero; the signed-rank test is undefined."""


# --- orchestrator ----------------------------------------------------------

class IdMismatch(DociclError):
    """Prediction ids and gold ids do not line up."""


class ConfigError(DociclError):
    """Run configuration is invalid (CLI exit code 2)."""
