import pytest

from nbiot_la.channel import SyntheticAwgn, extract_oracle
from nbiot_la.lut import Lut, LutKey, LutEntry, build_lut

SNR_GRID = [float(s) for s in range(-24, -15)]


@pytest.fixture(scope="session")
def synth():
    return SyntheticAwgn()


@pytest.fixture(scope="session")
def full_lut(synth):
    lut, unreachable = build_lut(synth, [256], SNR_GRID, [0.05])
    assert not unreachable
    return lut


@pytest.fixture(scope="session")
def ext_oracle():
    return extract_oracle()


@pytest.fixture
def ext_lut():
    """The single good row of the -24 dB extract that achieves 0.05 most cheaply."""
    lut = Lut()
    lut.set_row(LutKey(256, -24.0, 0.05), LutEntry(1, 128, 0.00491, 1024))
    return lut
