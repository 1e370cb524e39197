"""Valuation models: additive, unit-demand and top-k constrained additive."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimMismatch, DimensionTooLarge

AUDIT_MAX_ITEMS = 16


@dataclass(frozen=True)
class ValuationModel:
    kind: str            # "additive" | "unit_demand" | "top_k"
    k: int | None = None
    lipschitz: float = 1.0

    def __post_init__(self):
        if self.kind not in ("additive", "unit_demand", "top_k"):
            raise ConfigError(f"unknown valuation kind {self.kind!r}")
        if self.kind == "top_k" and (self.k is None or self.k < 1):
            raise ConfigError("top_k needs k >= 1")

    @property
    def L(self):
        return self.lipschitz

    def value(self, v, items) -> float:
        """Value of type vector ``v`` for the item set ``items`` (0-based indices)."""
        if not items:
            return 0.0
        vals = [v[j] for j in items]
        if self.kind == "additive":
            return float(sum(vals))
        if self.kind == "unit_demand":
            return float(max(vals))
        vals.sort(reverse=True)
        return float(sum(vals[: self.k]))

    def to_json(self):
        return {"top_k": self.k} if self.kind == "top_k" else self.kind

    def check_items(self, m):
        if self.kind == "top_k" and self.k > m:
            raise ConfigError(f"top_k with k={self.k} exceeds m={m}")


ADDITIVE = ValuationModel("additive")
UNIT_DEMAND = ValuationModel("unit_demand")


def top_k(k: int) -> ValuationModel:
    return ValuationModel("top_k", int(k))


def model_from_json(obj) -> ValuationModel:
    if obj == "additive":
        return ADDITIVE
    if obj == "unit_demand":
        return UNIT_DEMAND
    if isinstance(obj, dict) and set(obj) == {"top_k"}:
        return top_k(obj["top_k"])
    raise ConfigError(f"unrecognized valuation model {obj!r}")


def value(model: ValuationModel, v, items) -> float:
    return model.value(v, items)


def all_item_sets(m):
    return (frozenset(c) for r in range(m + 1) for c in itertools.combinations(range(m), r))


def lipschitz_audit(model: ValuationModel, v, w) -> bool:
    """Check |value(v,S) - value(w,S)| <= L * |v-w|_1 over every item set S."""
    v = np.asarray(v, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if v.size != w.size:
        raise DimMismatch("type vectors differ in length")
    if v.size > AUDIT_MAX_ITEMS:
        raise DimensionTooLarge(f"m={v.size} exceeds the audit limit of {AUDIT_MAX_ITEMS}")
    budget = model.L * np.abs(v - w).sum() + 1e-12
    return all(abs(model.value(v, s) - model.value(w, s)) <= budget for s in all_item_sets(v.size))
