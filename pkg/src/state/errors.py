"""Exception hierarchy shared by every layer.

Each class carries the exit code the CLI returns when it escapes a stage:
2 usage/configuration, 3 input/path/contract, 4 numeric failure.
This module imports NOTHING from src/.
"""


class HybridLabError(Exception):
    """Base class for all errors raised by hybridlab."""

    exit_code: int = 1


class ConfigurationError(HybridLabError):
    """Invalid or inconsistent configuration values."""

    exit_code = 2


class UsageError(HybridLabError):
    """Bad command-line usage (unknown split, refused overwrite, ...)."""

    exit_code = 2


class InputError(HybridLabError):
    """Missing files or inputs too short to process."""

    exit_code = 3


class ContractError(HybridLabError):
    """A caller violated a documented precondition (shapes, ids, ordering)."""

    exit_code = 3


class LexiconError(ContractError):
    """A word is not in the lexicon, or a lexicon entry names an unknown phone."""


class NumericError(HybridLabError):
    """Non-finite activations, gradients or losses."""

    exit_code = 4


class DecodeError(HybridLabError):
    """No final node is reachable at the last frame."""

    exit_code = 4


class AlignmentError(DecodeError):
    """Forced alignment impossible (too few frames for the transcript)."""


class PipelineError(HybridLabError):
    """A stage produced nothing usable (for example zero decodable utterances)."""

    exit_code = 4
