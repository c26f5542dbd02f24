import pytest

from mecstream.core import PricingConfig, SessionConfig, Spectator


@pytest.fixture
def config():
    return SessionConfig()


@pytest.fixture
def pricing():
    return PricingConfig()


@pytest.fixture
def make_spectator(config):
    def make(cls="PcFiber", sid=0, bandwidth=None, decode=None):
        device = config.device_class(cls)
        return Spectator(
            id=sid,
            device=device,
            bandwidth_now=device.base_bandwidth if bandwidth is None else bandwidth,
            decode_now=dict(device.decode_cap) if decode is None else decode,
            join_step=0,
        )

    return make


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
