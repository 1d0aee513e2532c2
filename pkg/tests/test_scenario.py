from pathlib import Path

import pytest

from microlab.errors import ScenarioError
from microlab.scenario import load_scenario, parse_scenario, region_dimension

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "scenarios" / "golden.yaml"
# recorded when the golden scenario was added; changes only if the file or the defaults change
GOLDEN_DIGEST = "8b2b94e765410010338e66918676e8fd9c4c469ea1394260ace3f9ec72c753b8"


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_scenario_loads(tmp_path):
    sc = load_scenario(write(tmp_path, "{}\n"))
    assert sc.region1.modes == 3 and sc.region1.cap == 2 and sc.region2.cap == 1
    assert sc.dimension_estimate == 10 * 4
    assert sc.canonical() == parse_scenario({}).canonical()
    assert sc.transfer_matrix()[0][0] == 0.1


def test_empty_file_is_minimal(tmp_path):
    assert load_scenario(write(tmp_path, "")).digest == parse_scenario({}).digest


def test_golden_digest():
    sc = load_scenario(GOLDEN)
    assert sc.digest == GOLDEN_DIGEST
    assert sc.source == str(GOLDEN)


def test_digest_ignores_source_and_layout(tmp_path):
    a = load_scenario(write(tmp_path, "name: x\nseed: 3\n", "a.yaml"))
    b = load_scenario(write(tmp_path, "seed: 3   # comment\nname: x\n", "b.yaml"))
    assert a.digest == b.digest
    c = load_scenario(write(tmp_path, "name: x\nseed: 4\n", "c.yaml"))
    assert c.digest != a.digest


def test_out_of_range_mode_index(tmp_path):
    text = "region1: {modes: 3}\ntransfer:\n  channels:\n    - {to: 4, from: 1, amplitude: 0.1}\n"
    with pytest.raises(ScenarioError, match=r"transfer\.channels\[0\]\.to.*out of range 1\.\.3"):
        load_scenario(write(tmp_path, text))


def test_parse_error_reports_line(tmp_path):
    text = "name: x\nregion1:\n  modes: [1, 2\n"
    with pytest.raises(ScenarioError, match=r"s\.yaml:\d+: parse error"):
        load_scenario(write(tmp_path, text))


def test_semantic_error_reports_line_and_field(tmp_path):
    text = "name: x\nstatistics: boson\nregion2:\n  modes: -1\n"
    with pytest.raises(ScenarioError) as exc:
        load_scenario(write(tmp_path, text))
    assert ":4:" in str(exc.value) and "region2.modes" in str(exc.value)


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ScenarioError, match="regoin1"):
        load_scenario(write(tmp_path, "regoin1: {}\n"))


def test_unknown_tolerance_rejected():
    with pytest.raises(ScenarioError, match="tolerances"):
        parse_scenario({"tolerances": {"made_up": 1e-3}})


def test_targets_not_allowed_with_preparation():
    data = {
        "state1": {"targets": {"number": 0.1}},
        "transfer": {"preparation": {"hopping": [[1, 0, 0], [0, 0, 0], [0, 0, 0]]}},
    }
    with pytest.raises(ScenarioError, match="state1.targets"):
        parse_scenario(data)


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("MICROLAB_MAX_DIM", "30")
    with pytest.raises(ScenarioError, match="exceeds the cap 30"):
        parse_scenario({})


def test_region_dimension_formula():
    assert region_dimension(3, 2, "boson") == 10
    assert region_dimension(3, 2, "fermion") == 7
    assert region_dimension(3, 5, "fermion") == 8


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "nope.yaml")


def test_amplitude_matrix_form():
    sc = parse_scenario({"transfer": {"amplitudes": [[0.1, 0, 0], [0, 0.2, 0], [0, 0, 0]]}})
    m = sc.transfer_matrix()
    assert m[1][1] == 0.2 and len(m) == 3 and len(m[0]) == 3
