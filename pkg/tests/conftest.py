"""Shared fixtures: compile the jit kernels once before anything is timed."""

from __future__ import annotations

import pytest

from deidpipe import _kernels
from deidpipe.lexicon import load_lexicon


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    _kernels.warmup()


@pytest.fixture()
def tiny_lexicon():
    """Two blacklist phrases and two whitelist phrases, no overlap."""
    black = ["#category: personnel", "john doe", "#category: patient_id", "mrn12345"]
    white = ["#category: descriptor", "pleural effusion", "cardiomegaly"]
    return load_lexicon(iter(black), iter(white))
