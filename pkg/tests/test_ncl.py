import itertools

import pytest
from hypothesis import given, strategies as st

from srncl.ncl import (DATA0, DATA1, GATE_LIBRARY, ILLEGAL, NULL, DualRailValue, GateSpec, NetlistError, decode,
                       encode_bit, gate_next_output, isc_next_output, lookup_gate, threshold)


def test_encoding_table():
    assert [DualRailValue.from_rails(d1, d0) for d1, d0 in [(0, 0), (0, 1), (1, 0), (1, 1)]] == \
        [NULL, DATA0, DATA1, ILLEGAL]
    assert encode_bit(0) is DATA0 and encode_bit(1) is DATA1
    assert [decode(v) for v in (NULL, DATA0, DATA1, ILLEGAL)] == ["null", 0, 1, "illegal"]
    assert DATA1.d1 == 1 and DATA1.d0 == 0
    with pytest.raises(ValueError):
        encode_bit(2)


def test_th23_hysteresis_sequence():
    th23 = lookup_gate("TH23")
    seq = [((1, 1, 0), 0, 1), ((1, 0, 0), 1, 1), ((0, 0, 0), 1, 0), ((1, 0, 0), 0, 0)]
    for inputs, prev, want in seq:
        assert gate_next_output(th23, prev, inputs) == want


def test_th34w2_weighted():
    g = lookup_gate("TH34w2")  # weights 2,1,1,1 threshold 3
    assert gate_next_output(g, 0, (1, 1, 0, 0)) == 1
    assert gate_next_output(g, 0, (0, 1, 1, 0)) == 0
    assert gate_next_output(g, 0, (0, 1, 1, 1)) == 1


def test_th33w2_register_gate():
    g = lookup_gate("TH33w2")  # in weighted 2: latch on in + either request
    assert gate_next_output(g, 0, (1, 1, 0)) == 1
    assert gate_next_output(g, 0, (1, 0, 0)) == 0
    assert gate_next_output(g, 0, (0, 1, 1)) == 0
    assert gate_next_output(g, 1, (0, 0, 1)) == 1  # a NULL needs both requests low
    assert gate_next_output(g, 1, (0, 0, 0)) == 0


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))),
       st.data())
def test_threshold_semantics_property(nm, data):
    n, m = nm
    spec = threshold(m, n)
    inputs = tuple(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    prev = data.draw(st.integers(0, 1))
    s = sum(inputs)
    want = 1 if s >= m else (0 if s == 0 else prev)
    assert gate_next_output(spec, prev, inputs) == want


def test_invalid_specs_rejected():
    with pytest.raises(NetlistError):
        GateSpec("TH52", 2, 5)
    with pytest.raises(NetlistError):
        lookup_gate("TH99")
    with pytest.raises(NetlistError):
        gate_next_output(lookup_gate("TH22"), 0, (1,))


def test_library_names_match_parameters():
    for kind, spec in GATE_LIBRARY.items():
        if kind.startswith("TH"):
            assert threshold(spec.m, spec.n, spec.weights).kind == kind


def _isc_pair(d1, d0, ka, kb, prev=(0, 0), force=0):
    """Iterate both cross-coupled rails to a fixed point."""
    o1, o0 = prev
    for _ in range(4):
        n1 = isc_next_output(1, o1, (d1, d0, ka, kb, o0), force)
        n0 = isc_next_output(0, o0, (d1, d0, ka, kb, n1), force)
        if (n1, n0) == (o1, o0):
            break
        o1, o0 = n1, n0
    return o1, o0


def test_isc_passes_legal_data_when_rfd():
    assert _isc_pair(1, 0, 1, 1) == (1, 0)
    assert _isc_pair(0, 1, 1, 1) == (0, 1)


def test_isc_forces_illegal_to_legal():
    assert _isc_pair(1, 1, 1, 1, force=0) == (0, 1)
    assert _isc_pair(1, 1, 1, 1, force=1) == (1, 0)


def test_isc_never_emits_illegal_exhaustive():
    for d1, d0, ka, kb, o1, o0 in itertools.product((0, 1), repeat=6):
        if (o1, o0) == (1, 1):
            continue
        assert _isc_pair(d1, d0, ka, kb, (o1, o0)) != (1, 1)


def test_isc_holds_first_value_against_later_rail():
    # glitched DATA1 latched, then the correct DATA0 rail also rises: keep DATA1
    assert _isc_pair(1, 1, 1, 1, prev=(1, 0)) == (1, 0)


def test_isc_blocks_new_data_when_rfn_and_resets_on_null():
    assert _isc_pair(1, 0, 0, 0) == (0, 0)
    assert _isc_pair(0, 0, 0, 0, prev=(1, 0)) == (0, 0)
    assert _isc_pair(0, 0, 1, 1, prev=(1, 0)) == (1, 0)  # rfd holds DATA through NULL input


def test_isc_follows_input_when_requests_disagree():
    assert _isc_pair(1, 0, 0, 1) == (1, 0)
    assert _isc_pair(0, 0, 1, 0, prev=(0, 1)) == (0, 0)
