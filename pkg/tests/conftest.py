import numpy as np
import pytest

from ris_ipac.config import SystemConfig
from ris_ipac.geometry import SPEED_OF_LIGHT, upa_coordinates
from ris_ipac.scenarios import build_scenario

FC = 30e9
HALF = SPEED_OF_LIGHT / FC / 2.0


def small_config(n_ue=2, n_sub=2, bs=(2, 1), ris=(2, 2), seed=0, **kw):
    """A compact configuration with generic UE positions."""
    ue = np.array([[32.0, 2.0, 1.5], [35.0, -2.0, 1.5], [38.0, 1.0, 1.5], [30.0, 5.0, 1.5]])[:n_ue]
    fields = dict(
        bs=upa_coordinates(*bs, HALF, "yz", (0.0, 0.0, 10.0)),
        ris=upa_coordinates(*ris, HALF, "xz", (20.0, 20.0, 10.0)),
        ue_positions=ue,
        obstruction=np.ones(n_ue, int),
        n_subcarriers=n_sub,
        rate_req=np.ones(n_ue),
        peb_threshold=np.full(n_ue, np.inf),
        seed=seed,
    )
    fields.update(kw)
    for key in ("obstruction", "rate_req", "peb_threshold"):
        fields[key] = np.broadcast_to(np.asarray(fields[key]), (n_ue,)).copy()
    return SystemConfig(**fields).validate()


def random_beams(rng, n_sub, n_ue, n_tx, scale=1.0):
    shape = (n_sub, n_ue, n_tx)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_phase(rng, m):
    return np.exp(2j * np.pi * rng.random(m)) / np.sqrt(m)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[1, 2, 3], ids=["scenario1", "scenario2", "scenario3"])
def desk_config(request):
    return build_scenario(request.param)


# --- acceptance report ---------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Log one pass/fail line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
