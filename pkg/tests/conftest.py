import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dca.core import SignalVector, StreamEvent  # noqa: E402


def to_events(raw):
    """Oracle-style ``(kind, payload)`` tuples -> StreamEvents."""
    out = []
    for t, (kind, payload) in enumerate(raw):
        out.append(StreamEvent(t, payload if kind == "antigen" else SignalVector(*payload)))
    return out


@pytest.fixture
def events_from():
    return to_events
