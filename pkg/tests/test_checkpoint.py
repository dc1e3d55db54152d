import numpy as np
import pytest

from broadband_mps import checkpoint
from broadband_mps.mps import TruncationPolicy, TwoSiteOperator

from conftest import random_state, random_unitary


def test_roundtrip_preserves_everything(rng, tmp_path):
    s = random_state(rng, 5, 3, 4).canonicalize(2)
    s.apply_two_site(TwoSiteOperator(random_unitary(rng, 9)), 1, TruncationPolicy(max_bond_dim=2))
    path = tmp_path / "state.mps"
    checkpoint.save(s, path)
    back = checkpoint.load(path)
    assert back.bond_dims == s.bond_dims
    assert back.ortho_center == s.ortho_center
    assert back.cumulative_discarded_weight == s.cumulative_discarded_weight
    for a, b in zip(s.tensors, back.tensors):
        assert np.array_equal(a, b)


def test_unknown_center_roundtrip(rng):
    s = random_state(rng, 3, 2, 2)
    assert s.ortho_center is None
    assert checkpoint.from_bytes(checkpoint.to_bytes(s)).ortho_center is None


def test_header_layout(rng):
    s = random_state(rng, 3, 2, 2)
    buf = checkpoint.to_bytes(s)
    assert buf[:8] == b"BBMPSCK\x00"
    assert int.from_bytes(buf[8:12], "little") == 1
    assert int.from_bytes(buf[12:16], "little") == 3
    assert int.from_bytes(buf[16:20], "little") == 2
    n_entries = sum(t.size for t in s.tensors)
    assert len(buf) == 32 + 4 * 4 + 16 * n_entries


@pytest.mark.parametrize("damage", ["magic", "version", "truncate", "trailing"])
def test_corrupt_input_rejected(rng, damage):
    buf = bytearray(checkpoint.to_bytes(random_state(rng, 3, 2, 2)))
    if damage == "magic":
        buf[0] = 0
    elif damage == "version":
        buf[8] = 9
    elif damage == "truncate":
        buf = buf[:-3]
    else:
        buf += b"\x00"
    with pytest.raises(ValueError):
        checkpoint.from_bytes(bytes(buf))
