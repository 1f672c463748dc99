"""Local features, logistic decision models and the two baseline strategies."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .graphs import DEFAULT_MAX_DEGREE, Graph, Role


class Color(enum.IntEnum):
    WHITE = 0
    RED = 1
    GREEN = 2

    @property
    def code(self) -> str:
        return "WRG"[self]

    @classmethod
    def from_code(cls, ch: str) -> "Color":
        try:
            return cls("WRG".index(ch))
        except ValueError:
            raise ValueError(f"unknown color code {ch!r}") from None

    def opposite(self) -> "Color":
        if self is Color.WHITE:
            raise ValueError("white has no opposite")
        return Color.GREEN if self is Color.RED else Color.RED


class DecisionKind(str, enum.Enum):
    INITIAL_TIMING = "InitialTiming"
    INITIAL_COLOR = "InitialColor"
    CHANGE_TIMING = "ChangeTiming"


FEATURES = (
    "D_inv", "D_vis", "N_inv", "N_vis",
    "G_inv", "G_vis", "R_inv", "R_vis",
    "O_inv", "O_vis", "C_inv", "C_vis",
)  # fmt: skip

KIND_FEATURES = {
    DecisionKind.INITIAL_TIMING: ("D_inv", "D_vis", "N_inv", "N_vis"),
    DecisionKind.INITIAL_COLOR: ("G_inv", "G_vis", "R_inv", "R_vis"),
    DecisionKind.CHANGE_TIMING: ("O_inv", "O_vis", "C_inv", "C_vis", "N_inv", "N_vis"),
}

ROLE_NAMES = {Role.REGULAR: "Regular", Role.VISIBLE: "Visible", Role.ADVERSARIAL: "Adversarial"}


def slot_features(kind: DecisionKind, has_visible: bool) -> tuple[str, ...]:
    """Features that can be non-zero in a slot (visible-side ones need a visible neighbour)."""
    names = KIND_FEATURES[DecisionKind(kind)]
    return names if has_visible else tuple(f for f in names if not f.endswith("_vis"))


@dataclass(frozen=True)
class LogisticModel:
    intercept: float = 0.0
    coefficients: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.coefficients) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown feature names: {sorted(unknown)}")
        object.__setattr__(
            self, "coefficients", {k: float(v) for k, v in self.coefficients.items() if v != 0}
        )

    def coef(self, name: str) -> float:
        return self.coefficients.get(name, 0.0)

    def score(self, features: Mapping[str, float]) -> float:
        return self.intercept + sum(c * features.get(k, 0.0) for k, c in self.coefficients.items())

    def shifted(self, delta: Mapping[str, float]) -> "LogisticModel":
        """Copy with additive changes; the key ``"Intercept"`` shifts the intercept."""
        coefs = dict(self.coefficients)
        intercept = self.intercept
        for name, d in delta.items():
            if name == "Intercept":
                intercept += d
            else:
                coefs[name] = coefs.get(name, 0.0) + d
        return LogisticModel(intercept, coefs)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def logistic_prob(model: LogisticModel, features: Mapping[str, float]) -> float:
    return sigmoid(model.score(features))


SlotKey = tuple[Role, bool, DecisionKind]


def all_slots() -> Iterator[SlotKey]:
    for role in Role:
        for has_visible in (False, True):
            for kind in DecisionKind:
                yield role, has_visible, kind


class ModelBank(Mapping):
    """The 18 logistic models keyed by (role, has_visible_neighbour, decision kind)."""

    def __init__(self, models: Mapping[SlotKey, LogisticModel]):
        normalized = {(Role(r), bool(h), DecisionKind(k)): m for (r, h, k), m in models.items()}
        missing = [s for s in all_slots() if s not in normalized]
        if missing:
            raise ValueError(f"model bank is missing slots: {missing}")
        self._models = {s: normalized[s] for s in all_slots()}

    def __getitem__(self, key: SlotKey) -> LogisticModel:
        role, has_visible, kind = key
        return self._models[(Role(role), bool(has_visible), DecisionKind(kind))]

    def __iter__(self):
        return iter(self._models)

    def __len__(self):
        return len(self._models)

    def __eq__(self, other):
        return isinstance(other, ModelBank) and self._models == other._models

    def replace(self, updates: Mapping[SlotKey, LogisticModel]) -> "ModelBank":
        models = dict(self._models)
        models.update(updates)
        return ModelBank(models)

    def to_records(self) -> list[dict]:
        return [
            {
                "role": ROLE_NAMES[role],
                "has_visible": has_visible,
                "decision": kind.value,
                "intercept": m.intercept,
                "coefficients": {f: m.coefficients[f] for f in FEATURES if f in m.coefficients},
            }
            for (role, has_visible, kind), m in self._models.items()
        ]

    @classmethod
    def from_records(cls, records) -> "ModelBank":
        by_name = {v: k for k, v in ROLE_NAMES.items()}
        models = {}
        for i, rec in enumerate(records):
            try:
                key = (by_name[rec["role"]], bool(rec["has_visible"]), DecisionKind(rec["decision"]))
                model = LogisticModel(float(rec["intercept"]), rec.get("coefficients", {}))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"model bank record {i}: {exc}") from None
            if key in models:
                raise ValueError(f"model bank record {i}: duplicate slot {key}")
            models[key] = model
        return cls(models)

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelBank":
        return cls.from_records(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ModelBank":
        return cls.from_json(Path(path).read_text())

    def arrays(self, kind: DecisionKind) -> tuple[np.ndarray, np.ndarray]:
        """Intercepts ``(6,)`` and coefficients ``(6, len(FEATURES))`` indexed by ``2*role + has_visible``."""
        kind = DecisionKind(kind)
        b = np.zeros(6)
        w = np.zeros((6, len(FEATURES)))
        for role in Role:
            for has_visible in (False, True):
                m = self._models[(role, has_visible, kind)]
                idx = 2 * role + has_visible
                b[idx] = m.intercept
                for j, f in enumerate(FEATURES):
                    w[idx, j] = m.coef(f)
        return b, w


def paper_model_bank() -> ModelBank:
    """The published coefficient bank (blank table cells are zero)."""
    text = resources.files("netconsensus").joinpath("data/paper_bank.json").read_text()
    return ModelBank.from_json(text)


def zero_model_bank(intercept: float = 0.0) -> ModelBank:
    return ModelBank({s: LogisticModel(intercept) for s in all_slots()})


# ---------------------------------------------------------------------------
# features


def neighbor_groups(g: Graph, roles, node: int) -> tuple[list[int], list[int]]:
    """Split neighbours into (non-visible, visible); adversaries look like regular players."""
    roles = np.asarray(roles)
    inv, vis = [], []
    for w in g.adjacency[node]:
        (vis if roles[w] == Role.VISIBLE else inv).append(w)
    return inv, vis


def extract_features(
    colors,
    g: Graph,
    roles,
    node: int,
    kind: DecisionKind,
    own_color: Color | int | None = None,
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> dict[str, float]:
    kind = DecisionKind(kind)
    colors = np.asarray(colors)
    own = Color(colors[node] if own_color is None else own_color)
    if kind is DecisionKind.CHANGE_TIMING and own is Color.WHITE:
        raise ValueError("change timing needs a colored node")
    if kind is not DecisionKind.CHANGE_TIMING and own is not Color.WHITE:
        raise ValueError("initial decisions are made by white nodes")

    out: dict[str, float] = {}
    for suffix, group in zip(("inv", "vis"), neighbor_groups(g, roles, node)):
        size = len(group)
        red = sum(1 for w in group if colors[w] == Color.RED)
        green = sum(1 for w in group if colors[w] == Color.GREEN)
        fr = red / size if size else 0.0
        fg = green / size if size else 0.0
        out[f"N_{suffix}"] = size / max_degree
        if kind is DecisionKind.INITIAL_TIMING:
            out[f"D_{suffix}"] = abs(fr - fg)
        elif kind is DecisionKind.INITIAL_COLOR:
            out[f"G_{suffix}"] = fg
            out[f"R_{suffix}"] = fr
        else:
            same, other = (fr, fg) if own is Color.RED else (fg, fr)
            out[f"O_{suffix}"] = other
            out[f"C_{suffix}"] = same
    return {k: out[k] for k in KIND_FEATURES[kind]}


def has_visible_neighbor(g: Graph, roles, node: int) -> bool:
    roles = np.asarray(roles)
    return any(roles[w] == Role.VISIBLE for w in g.adjacency[node])


def decision_prob(
    bank: ModelBank, colors, g: Graph, roles, node: int, kind: DecisionKind
) -> float:
    """Per-tick probability for one node, selecting the slot from its role and neighbourhood."""
    roles = np.asarray(roles)
    key = (Role(roles[node]), has_visible_neighbor(g, roles, node), DecisionKind(kind))
    return logistic_prob(bank[key], extract_features(colors, g, roles, node, kind))


# ---------------------------------------------------------------------------
# baseline strategies


def decide_majority(colors, g: Graph, node: int, own_color: Color | int | None = None) -> Color:
    """Majority over neighbours plus one's own colour; ties keep the current colour."""
    colors = np.asarray(colors)
    own = Color(colors[node] if own_color is None else own_color)
    red = sum(1 for w in g.adjacency[node] if colors[w] == Color.RED) + (own is Color.RED)
    green = sum(1 for w in g.adjacency[node] if colors[w] == Color.GREEN) + (own is Color.GREEN)
    if red > green:
        return Color.RED
    if green > red:
        return Color.GREEN
    return own


def decide_follow_leader(colors, g: Graph, roles, node: int) -> Color | None:
    """Colour of the lowest-id coloured visible neighbour, or None."""
    colors = np.asarray(colors)
    roles = np.asarray(roles)
    for w in g.adjacency[node]:
        if roles[w] == Role.VISIBLE and colors[w] != Color.WHITE:
            return Color(colors[w])
    return None


def baseline_gate(node: int, roles, g: Graph, tick: int, delay: int) -> bool:
    """Visible nodes and their neighbours always act; everyone else waits until ``delay``."""
    if delay < 0:
        raise ValueError("delay must be >= 0")
    roles = np.asarray(roles)
    if roles[node] == Role.VISIBLE or has_visible_neighbor(g, roles, node):
        return True
    return tick >= delay
