from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mitlnav.scenario import ScenarioError, load_scenario, parse_scenario, to_fraction

TINY = Path(__file__).parent / "data" / "tiny.yaml"


def test_bundled_scenario(scenario):
    assert len(scenario.rois) == 14
    assert all(r.radius == 0.7 for r in scenario.rois.values())
    assert scenario.h == Fraction(1, 10)
    assert scenario.initial_region() == "R1"
    assert set(scenario.unsafe_regions()) == {"R2", "R4", "R6", "R7", "R8", "R10"}
    assert scenario.alphabet == {"obs", "goal1", "goal2"}
    assert np.allclose(scenario.fhocp_config().R, 0.5 * np.eye(2))


def test_to_fraction_is_exact():
    assert to_fraction(0.1) == Fraction(1, 10)
    assert to_fraction("5/2") == Fraction(5, 2)
    with pytest.raises(ScenarioError):
        to_fraction("abc", "fhocp.h")


def _doc():
    return load_scenario(TINY).raw


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.pop("workspace"), "workspace"),
    (lambda d: d["rois"][1].pop("center"), "rois[1].center"),
    (lambda d: d["rois"][1].update(radius=0.05), "rois[1].radius"),
    (lambda d: d["rois"][1].update(id="A"), "rois[1].id"),
    (lambda d: d["fhocp"].update(T=0.15), "fhocp"),
    (lambda d: d["tube"].update(mode="loose"), "tube.mode"),
    (lambda d: d["gains"].update(k_margin=1.0), "gains.k_margin"),
    (lambda d: d.update(model={"name": "unicycle"}), "model"),
    (lambda d: d["disturbance"].update(kind="gusty"), "disturbance.kind"),
    (lambda d: d["initial"].update(position=[9, 9]), "initial.position"),
])
def test_errors_name_the_field(mutate, path):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    assert info.value.path == path


def test_initial_outside_regions():
    doc = _doc()
    doc["initial"]["position"] = [0.0, 0.6]
    with pytest.raises(ScenarioError):
        parse_scenario(doc).initial_region()


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.yaml")


def test_digest_tracks_content():
    a = parse_scenario(_doc())
    doc = _doc()
    doc["d_bound"] = 0.06
    assert a.digest() == parse_scenario(_doc()).digest() != parse_scenario(doc).digest()
