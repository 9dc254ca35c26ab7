from __future__ import annotations

import json

import pytest

from canentropy.attacks import AttackKind
from canentropy.config import ConfigError, load_scenario, parse_scenario, save_scenario
from canentropy.traffic import default_scenario
from canentropy.config import ScenarioFile

GOOD = {
    "ecus": [{"name": "A", "assigned_ids": [{"id": "0x100", "period": 10000}, {"id": 0x2A0, "period": 20000, "dlc": 4}]}],
    "duration": 5,
    "attacks": [{"kind": "SingleId", "ids": ["0x010"], "frequency": 100, "start": 1, "duration": 2}],
}


def test_parse_good_document():
    sf = parse_scenario(GOOD)
    assert sf.traffic.id_set() == {0x100, 0x2A0}
    assert sf.attacks[0].kind is AttackKind.SINGLE_ID
    assert sf.attacks[0].ids == (0x010,)


@pytest.mark.parametrize(
    "mutate, pointer",
    [
        (lambda d: d["ecus"][0]["assigned_ids"][1].update(period=-5), "/ecus/0/assigned_ids/1/period"),
        (lambda d: d["ecus"][0]["assigned_ids"][0].update(id="0x900"), "/ecus/0/assigned_ids/0"),
        (lambda d: d["attacks"][0].update(kind="Replay"), "/attacks/0/kind"),
        (lambda d: d["attacks"][0].update(ids=["0x010", "0x020"]), "/attacks/0"),
        (lambda d: d.update(bogus=1), "/:"),
        (lambda d: d["ecus"][0].pop("name"), "/ecus/0"),
    ],
)
def test_errors_carry_json_pointer(mutate, pointer):
    doc = json.loads(json.dumps(GOOD))
    mutate(doc)
    with pytest.raises(ConfigError) as exc:
        parse_scenario(doc, "s.json")
    assert f"s.json: {pointer}" in str(exc.value)


def test_file_round_trip(tmp_path):
    sf = ScenarioFile(default_scenario(duration=3.0))
    save_scenario(sf, tmp_path / "v.json")
    assert load_scenario(tmp_path / "v.json") == sf


def test_broken_json_reports_line(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{\n  "ecus": [\n')
    with pytest.raises(ConfigError, match="line"):
        load_scenario(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.json")
