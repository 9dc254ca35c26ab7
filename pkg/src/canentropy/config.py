"""Scenario files: a vehicle (TrafficScenario fields) plus an optional ``attacks`` array."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .attacks import AttackKind, AttackScenario
from .traffic import PAYLOAD_MODES, TrafficScenario, scenario_from_dict, scenario_to_dict

_ID = {"oneOf": [{"type": "integer", "minimum": 0, "maximum": 0x7FF}, {"type": "string", "pattern": "^(0[xX])?[0-9A-Fa-f]{1,3}$"}]}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["ecus"],
    "properties": {
        "ecus": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "assigned_ids"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "assigned_ids": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["id", "period"],
                            "properties": {
                                "id": _ID,
                                "period": {"type": "integer", "minimum": 1},
                                "dlc": {"type": "integer", "minimum": 0, "maximum": 8},
                                "payload_mode": {"enum": list(PAYLOAD_MODES)},
                                "offset": {"type": "integer", "minimum": 0},
                            },
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
        },
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "baud_rate": {"type": "integer", "minimum": 1},
        "jitter_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        "rng_seed": {"type": "integer", "minimum": 0},
        "attacks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": [k.value for k in AttackKind]},
                    "ids": {"type": "array", "items": _ID},
                    "frequency": {"type": "number", "exclusiveMinimum": 0},
                    "start": {"type": "number", "minimum": 0},
                    "duration": {"type": "number", "exclusiveMinimum": 0},
                    "rng_seed": {"type": "integer", "minimum": 0},
                    "source": {"type": "string", "minLength": 1},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioFile:
    traffic: TrafficScenario
    attacks: tuple[AttackScenario, ...] = ()


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def parse_scenario(doc, origin: str = "<scenario>") -> ScenarioFile:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{origin}: {_pointer(exc.absolute_path)}: {exc.message}") from None
    # Semantic checks the schema cannot express, reported at the same granularity.
    for j, a in enumerate(doc.get("attacks", [])):
        try:
            AttackScenario.from_dict(a)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{origin}: /attacks/{j}: {exc}") from None
    for e_idx, e in enumerate(doc["ecus"]):
        for a_idx, a in enumerate(e["assigned_ids"]):
            try:
                scenario_from_dict({"ecus": [{"name": "x", "assigned_ids": [a]}]})
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{origin}: /ecus/{e_idx}/assigned_ids/{a_idx}: {exc}") from None
    try:
        traffic = scenario_from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    attacks = tuple(AttackScenario.from_dict(a) for a in doc.get("attacks", []))
    return ScenarioFile(traffic, attacks)


def load_scenario(path) -> ScenarioFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_scenario(doc, str(path))


def scenario_file_dict(sf: ScenarioFile) -> dict:
    doc = scenario_to_dict(sf.traffic)
    if sf.attacks:
        doc["attacks"] = [a.to_dict() for a in sf.attacks]
    return doc


def save_scenario(sf: ScenarioFile, path) -> None:
    Path(path).write_text(json.dumps(scenario_file_dict(sf), indent=2) + "\n")
