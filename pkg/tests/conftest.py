import importlib.resources as resources

import pytest

from rangegov.synth import generate, load_scenario

SCENARIO_NAMES = (
    "h1-confirm", "h1-falsify", "h2-confirm", "h2-falsify",
    "h3-confirm", "h3-falsify", "h4-confirm", "h4-falsify",
)


def scenario_path(name: str) -> str:
    return str(resources.files("rangegov.scenarios").joinpath(name + ".json"))


@pytest.fixture(scope="session")
def scenario_panels():
    """name -> (panel, ground truth) for every packaged scenario."""
    out = {}
    for name in SCENARIO_NAMES:
        panel, gt = generate(load_scenario(scenario_path(name)))
        out[name] = (panel, gt)
    return out
