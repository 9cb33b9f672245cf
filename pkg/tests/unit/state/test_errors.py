"""Tests for src/state/errors.py."""

import pytest
from src.state.errors import (
    AlignmentError,
    ConfigurationError,
    ContractError,
    DecodeError,
    HybridLabError,
    InputError,
    LexiconError,
    NumericError,
    PipelineError,
    UsageError,
)


@pytest.mark.unit
class TestExitCodes:
    @pytest.mark.parametrize(
        "error_cls,code",
        [
            (HybridLabError, 1),
            (ConfigurationError, 2),
            (UsageError, 2),
            (InputError, 3),
            (ContractError, 3),
            (LexiconError, 3),
            (NumericError, 4),
            (DecodeError, 4),
            (AlignmentError, 4),
            (PipelineError, 4),
        ],
    )
    def test_exit_code(self, error_cls: type[HybridLabError], code: int) -> None:
        assert error_cls("boom").exit_code == code

    def test_subclassing(self) -> None:
        assert issubclass(LexiconError, ContractError)
        assert issubclass(AlignmentError, DecodeError)
