import math

import pytest

from dca.core import (
    ConfigError,
    DendriticCell,
    InputError,
    OutputPair,
    SignalVector,
    StreamEvent,
    WeightMatrix,
    append,
)


class TestAppend:
    def test_empty_list(self):
        assert append(OutputPair(3, 2.0), []) == [(3, 2.0)]

    def test_duplicates_kept(self):
        assert append(OutputPair(3, 2.0), [OutputPair(3, 2.0)]) == [(3, 2.0), (3, 2.0)]

    def test_order_preserved(self):
        assert append(OutputPair(7, -1.5), [OutputPair(3, 2.0)]) == [(3, 2.0), (7, -1.5)]


class TestSignalVector:
    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            SignalVector(math.nan, 0, 0)
        with pytest.raises(InputError):
            SignalVector(0, math.inf, 0)

    def test_range_check(self):
        assert SignalVector(0, 50, 100).within(100)
        assert not SignalVector(0, 50, 101).within(100)


class TestStreamEvent:
    def test_kinds(self):
        assert StreamEvent(0, 5).is_antigen
        assert StreamEvent(1, SignalVector(1, 2, 3)).is_signal

    @pytest.mark.parametrize("payload", [None, "x", -1, True])
    def test_invalid_payload(self, payload):
        with pytest.raises(InputError):
            StreamEvent(0, payload)


class TestWeightMatrix:
    def test_defaults(self):
        assert WeightMatrix().rows == ((2.0, 1.0, 2.0), (2.0, 1.0, -3.0))

    def test_csm_row_must_deplete(self):
        with pytest.raises(ConfigError):
            WeightMatrix(0, 0, 0)
        with pytest.raises(ConfigError):
            WeightMatrix(-1, 1, 1)

    def test_non_finite(self):
        with pytest.raises(ConfigError):
            WeightMatrix(w_k_safe=math.nan)

    def test_from_rows(self):
        w = WeightMatrix.from_rows(["1", "0", "1"], [1, 1, -1])
        assert w.rows == ((1.0, 0.0, 1.0), (1.0, 1.0, -1.0))


def test_cell_starts_fresh():
    c = DendriticCell(1, 25.0)
    assert c.remaining_lifespan == 25.0
    assert c.signal_profile == 0.0
    assert c.antigen_profile == []
    with pytest.raises(ConfigError):
        DendriticCell(1, 0.0)
