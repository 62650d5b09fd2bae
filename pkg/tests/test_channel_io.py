import struct

import numpy as np
import pytest

from cellfree_wsr.channel_io import MAGIC, decode_channels, dump_channels, encode_channels, load_channels
from cellfree_wsr.errors import FormatError
from cellfree_wsr.network import ChannelSet

from .helpers import random_channels


def _same(a, b):
    assert a.serving_sets == b.serving_sets
    for i in range(a.num_aps):
        for k in range(a.num_ues):
            assert a.link(i, k).tobytes() == b.link(i, k).tobytes()


def test_round_trip_is_bit_exact(tmp_path, reference_net):
    path = tmp_path / "ch.bin"
    dump_channels(reference_net, path)
    back = load_channels(path)
    _same(reference_net, back)
    assert back.noise_powers.tobytes() == reference_net.noise_powers.tobytes()
    assert encode_channels(back) == path.read_bytes()


def test_unset_noise_round_trips_as_unset():
    ch = random_channels(0).with_noise(None)
    assert not decode_channels(encode_channels(ch)).has_noise


def test_hand_built_file():
    h = np.array([[1 + 2j, -0.5j]])
    data = (b"CFCH" + struct.pack("<III", 1, 1, 1) + struct.pack("<II", 1, 2)
            + struct.pack("<4d", 1.0, 2.0, 0.0, -0.5) + struct.pack("<d", 0.25)
            + struct.pack("<II", 1, 0))
    ch = decode_channels(data)
    np.testing.assert_array_equal(ch.link(0, 0), h)
    assert ch.noise_powers.tolist() == [0.25]
    assert ch.serving_sets == ((0,),)
    assert encode_channels(ch) == data


def _valid():
    return encode_channels(random_channels(1, I=2, K=2, M=3, N=2, L=1))


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:4] + struct.pack("<I", 2) + d[8:],
    lambda d: d[:-3],
    lambda d: d[:10],
    lambda d: d + b"\0",
    lambda d: d[:8] + struct.pack("<I", 1 << 20) + d[12:],
    lambda d: d[:20] + struct.pack("<I", 0) + d[24:],
    lambda d: d[:-4] + struct.pack("<I", 7),
])
def test_corrupt_files_raise_format_error(mutate):
    with pytest.raises(FormatError):
        decode_channels(mutate(_valid()))


def test_partially_unset_noise_is_rejected():
    ch = random_channels(1, I=1, K=2, M=2, N=1, L=1)
    data = bytearray(encode_channels(ch))
    footer = len(data) - 2 * 8 - 2 * 8
    data[footer:footer + 8] = struct.pack("<d", float("nan"))
    with pytest.raises(FormatError):
        decode_channels(bytes(data))


def test_magic_constant():
    assert MAGIC == b"CFCH"
