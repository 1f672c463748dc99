"""JSON experiment configs: schema validation and typed round-trippable objects."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

from .behavior import ModelBank, paper_model_bank
from .graphs import DEFAULT_MAX_DEGREE, Placement, TopologySpec, er_probability

PRESETS = {
    "ER-dense": {"kind": "ER", "p": er_probability(5.1)},
    "ER-sparse": {"kind": "ER", "p": er_probability(2.6)},
    "BA": {"kind": "BA", "m": 3, "gamma": 1.0},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the JSON path."""


_TOPOLOGY = {
    "type": "object",
    "properties": {
        "label": {"type": "string"},
        "preset": {"enum": sorted(PRESETS)},
        "kind": {"enum": ["ER", "BA", "SmallWorld"]},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "m": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number"},
        "k": {"type": "integer", "minimum": 0},
        "beta": {"type": "number", "minimum": 0, "maximum": 1},
        "max_degree": {"type": "integer", "minimum": 1},
        "require_connected": {"type": "boolean"},
    },
    "anyOf": [{"required": ["preset"]}, {"required": ["kind"]}],
    "additionalProperties": False,
}

_COUNTS = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}
_BEHAVIOR = {
    "type": "object",
    "properties": {
        "type": {"enum": ["models", "baseline"]},
        "bank": {"type": ["string", "null"]},
        "delay": {"type": "integer", "minimum": 0},
    },
    "required": ["type"],
    "additionalProperties": False,
}
_PLACEMENT = {
    "type": "object",
    "properties": {"visible": {"enum": ["random", "greedy"]}, "adversary": {"enum": ["random", "greedy"]}},
    "required": ["visible", "adversary"],
    "additionalProperties": False,
}
_COMMON = {
    "name": {"type": "string"},
    "team_size": {"type": "integer", "minimum": 1},
    "ticks": {"type": "integer", "minimum": 1},
    "replications": {"type": "integer", "minimum": 1},
    "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "output_dir": {"type": ["string", "null"]},
}

CAMPAIGN_SCHEMA = {
    "type": "object",
    "properties": {
        **_COMMON,
        "topologies": {"type": "array", "items": _TOPOLOGY, "minItems": 1},
        "adversaries": _COUNTS,
        "visible": _COUNTS,
        "placements": {"type": "array", "items": _PLACEMENT, "minItems": 1},
        "behavior": _BEHAVIOR,
        "write_traces": {"type": "boolean"},
        "min_instances": {"type": "integer", "minimum": 1},
    },
    "required": ["topologies"],
    "additionalProperties": False,
}

BASELINE_SCHEMA = {
    "type": "object",
    "properties": {
        **_COMMON,
        "topology": _TOPOLOGY,
        "visible": _COUNTS,
        "delays": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "adversaries": {"const": 0},
    },
    "required": ["topology", "delays"],
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        **_COMMON,
        "kind": {"enum": ["density", "clustering", "gamma"]},
        "topology": _TOPOLOGY,
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "adversaries": _COUNTS,
        "visible": _COUNTS,
        "behavior": _BEHAVIOR,
    },
    "required": ["kind", "topology", "values"],
    "additionalProperties": False,
}

TUNE_SCHEMA = {
    "type": "object",
    "properties": {
        **_COMMON,
        "epsilon": {"type": "number", "minimum": 0},
        "passes": {"type": "integer", "minimum": 0},
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
        "candidate_range": {"type": "number", "minimum": 0},
        "tune_intercepts": {"type": "boolean"},
        "bank": {"type": ["string", "null"]},
        "topology": _TOPOLOGY,
        "adversaries": {"type": "integer", "minimum": 0},
        "visible": {"type": "integer", "minimum": 0},
    },
    "required": ["epsilon", "topology"],
    "additionalProperties": False,
}

FIT_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "logs": {"type": "string"},
        "edges_dir": {"type": ["string", "null"]},
        "lambda_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "folds": {"type": "integer", "minimum": 2},
        "fixed_lambda": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "master_seed": {"type": "integer", "minimum": 0},
        "reference_bank": {"type": ["string", "null"]},
        "output_dir": {"type": ["string", "null"]},
    },
    "required": ["logs"],
    "additionalProperties": False,
}


def validate(data, schema) -> None:
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        best = jsonschema.exceptions.best_match([exc]) or exc
        raise ConfigError(f"{best.json_path}: {best.message}") from None


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopologyEntry:
    label: str
    kind: str
    p: float = 0.0
    m: int = 1
    gamma: float = 1.0
    k: int = 2
    beta: float = 0.0
    max_degree: int = DEFAULT_MAX_DEGREE
    require_connected: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "TopologyEntry":
        d = dict(d)
        preset = d.pop("preset", None)
        base = dict(PRESETS[preset]) if preset else {}
        base.update(d)
        base.setdefault("label", preset or base["kind"])
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    def spec(self, n: int) -> TopologySpec:
        kw = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "label"}
        return TopologySpec(n=n, **kw)


@dataclass(frozen=True)
class BehaviorEntry:
    type: str = "models"
    bank: str | None = None
    delay: int = 0

    def load_bank(self) -> ModelBank:
        return paper_model_bank() if self.bank in (None, "paper") else ModelBank.load(self.bank)


@dataclass
class Campaign:
    topologies: list[TopologyEntry]
    name: str = "campaign"
    team_size: int = 20
    adversaries: list[int] = field(default_factory=lambda: [0])
    visible: list[int] = field(default_factory=lambda: [0])
    placements: list[tuple[str, str]] = field(default_factory=lambda: [("random", "random")])
    behavior: BehaviorEntry = field(default_factory=BehaviorEntry)
    ticks: int = 60
    replications: int = 1000
    master_seed: int = 0
    output_dir: str | None = None
    write_traces: bool = False
    min_instances: int = 100

    @classmethod
    def from_dict(cls, d: dict) -> "Campaign":
        validate(d, CAMPAIGN_SCHEMA)
        d = dict(d)
        d["topologies"] = [TopologyEntry.from_dict(t) for t in d["topologies"]]
        if "placements" in d:
            d["placements"] = [(Placement(p["visible"]).value, Placement(p["adversary"]).value) for p in d["placements"]]
        if "behavior" in d:
            d["behavior"] = BehaviorEntry(**d["behavior"])
        c = cls(**d)
        if c.behavior.type == "baseline" and any(c.adversaries):
            raise ConfigError("$.adversaries: baseline behaviour supports no adversaries")
        return c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["placements"] = [{"visible": v, "adversary": a} for v, a in self.placements]
        return d

    def cells(self) -> list[dict]:
        """Cross product in declaration order: topology, a, v, placement."""
        out = []
        for topo in self.topologies:
            for a in self.adversaries:
                for v in self.visible:
                    for vis_s, adv_s in self.placements:
                        out.append({
                            "topology": topo.label, "entry": topo, "n": self.team_size + a, "a": a, "v": v,
                            "placement": f"{vis_s}/{adv_s}", "strategies": (vis_s, adv_s),
                        })  # fmt: skip
        return out


@dataclass
class BaselineCampaign:
    topology: TopologyEntry
    delays: list[int]
    name: str = "baseline"
    team_size: int = 20
    visible: list[int] = field(default_factory=lambda: [0, 1, 2, 5])
    ticks: int = 60
    replications: int = 1000
    master_seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineCampaign":
        if d.get("adversaries"):
            raise ConfigError("$.adversaries: baseline behaviour supports no adversaries")
        validate(d, BASELINE_SCHEMA)
        d = {k: v for k, v in d.items() if k != "adversaries"}
        d["topology"] = TopologyEntry.from_dict(d["topology"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepCampaign:
    kind: str
    topology: TopologyEntry
    values: list[float]
    name: str = "sweep"
    team_size: int = 20
    adversaries: list[int] = field(default_factory=lambda: [0])
    visible: list[int] = field(default_factory=lambda: [0])
    behavior: BehaviorEntry = field(default_factory=BehaviorEntry)
    ticks: int = 60
    replications: int = 1000
    master_seed: int = 0
    output_dir: str | None = None

    EXPECTED = {"density": ("BA", "ER"), "clustering": ("SmallWorld",), "gamma": ("BA",)}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepCampaign":
        validate(d, SWEEP_SCHEMA)
        d = dict(d)
        d["topology"] = TopologyEntry.from_dict(d["topology"])
        if "behavior" in d:
            d["behavior"] = BehaviorEntry(**d["behavior"])
        c = cls(**d)
        if c.topology.kind not in cls.EXPECTED[c.kind]:
            raise ConfigError(
                f"$.topology.kind: {c.kind} sweep needs one of {cls.EXPECTED[c.kind]}, got {c.topology.kind}"
            )
        if c.behavior.type == "baseline" and any(c.adversaries):
            raise ConfigError("$.adversaries: baseline behaviour supports no adversaries")
        return c

    def to_dict(self) -> dict:
        return asdict(self)

    def parameter(self) -> str:
        if self.kind == "density":
            return "m" if self.topology.kind == "BA" else "p"
        return "beta" if self.kind == "clustering" else "gamma"


@dataclass
class TuneCampaign:
    epsilon: float
    topology: TopologyEntry
    name: str = "tune"
    team_size: int = 20
    adversaries: int = 0
    visible: int = 0
    passes: int = 1
    grid_step: float = 0.02
    candidate_range: float = 0.5
    tune_intercepts: bool = True
    bank: str | None = None
    ticks: int = 60
    replications: int = 500
    master_seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "TuneCampaign":
        validate(d, TUNE_SCHEMA)
        d = dict(d)
        d["topology"] = TopologyEntry.from_dict(d["topology"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitCampaign:
    logs: str
    name: str = "fit"
    edges_dir: str | None = None
    lambda_grid: list[float] = field(default_factory=lambda: [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2])
    folds: int = 5
    fixed_lambda: float | None = None
    max_iters: int = 50_000
    tolerance: float = 1e-8
    master_seed: int = 0
    reference_bank: str | None = "paper"
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "FitCampaign":
        validate(d, FIT_SCHEMA)
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _restore(d: dict) -> dict:
    # tuples serialise as lists; normalise so parse(serialise(x)) == x
    return json.loads(json.dumps(d))


def roundtrip(obj):
    """Serialise to JSON-compatible data and parse back (used to check config identity)."""
    return type(obj).from_dict(_restore(obj.to_dict()))
