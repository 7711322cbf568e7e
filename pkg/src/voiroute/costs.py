"""Tier-aware acquisition costs for an ordered set of input fidelities.

A fidelity's unnormalized cost is its storage-tier base cost plus a bandwidth
term proportional to its payload size relative to the most expensive level.
Costs are then rescaled so that level always costs exactly 120, which keeps
numbers comparable across deployment profiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

NORMALIZATION_TARGET = 120.0


class ProfileError(ValueError):
    """Raised for malformed profiles or non-monotone derived costs."""


@dataclass(frozen=True)
class FidelityLevel:
    """One fidelity: an id, its average payload size, and its tier base cost."""

    id: str
    avg_size_kb: float
    tier_base_cost: float

    def __post_init__(self) -> None:
        if not self.id:
            raise ProfileError("fidelity id must be non-empty")
        if self.avg_size_kb <= 0:
            raise ProfileError(f"level {self.id!r}: avg_size_kb must be > 0")
        if self.tier_base_cost < 0:
            raise ProfileError(f"level {self.id!r}: tier_base_cost must be >= 0")


@dataclass(frozen=True)
class CostProfile:
    """Ordered fidelity levels (cheapest first) plus the bandwidth weight.

    The last level is the normalization reference: its normalized cost is
    pinned to ``normalization_target``.
    """

    levels: tuple[FidelityLevel, ...]
    w_bw: float
    normalization_target: float = NORMALIZATION_TARGET

    def __post_init__(self) -> None:
        if not self.levels:
            raise ProfileError("profile needs at least one level")
        ids = [lv.id for lv in self.levels]
        if len(set(ids)) != len(ids):
            raise ProfileError(f"duplicate level ids in profile: {ids}")
        if self.w_bw < 0:
            raise ProfileError("w_bw must be >= 0")

    @property
    def full(self) -> FidelityLevel:
        return self.levels[-1]

    @property
    def level_ids(self) -> tuple[str, ...]:
        return tuple(lv.id for lv in self.levels)

    def level(self, level_id: str) -> FidelityLevel:
        for lv in self.levels:
            if lv.id == level_id:
                return lv
        raise ProfileError(f"unknown fidelity level {level_id!r}")

    def validate(self) -> None:
        """Reject profiles whose normalized costs are not strictly increasing."""
        normalized_costs(self)

    @classmethod
    def from_config(cls, config: dict) -> "CostProfile":
        try:
            levels = tuple(
                FidelityLevel(
                    id=str(entry["id"]),
                    avg_size_kb=float(entry["size_kb"]),
                    tier_base_cost=float(entry["tier_base"]),
                )
                for entry in config["levels"]
            )
            profile = cls(levels=levels, w_bw=float(config["w_bw"]))
        except (KeyError, TypeError) as exc:
            raise ProfileError(f"malformed profile config: {exc}") from exc
        profile.validate()
        return profile

    @classmethod
    def from_file(cls, path: str | Path) -> "CostProfile":
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
        return cls.from_config(config)

    def to_config(self) -> dict:
        return {
            "w_bw": self.w_bw,
            "levels": [
                {"id": lv.id, "size_kb": lv.avg_size_kb, "tier_base": lv.tier_base_cost}
                for lv in self.levels
            ],
        }


def size_ratio(level: FidelityLevel, full: FidelityLevel) -> float:
    """Dimensionless bandwidth ratio r(f) = size(f) / size(full)."""
    if full.avg_size_kb <= 0 or level.avg_size_kb <= 0:
        raise ProfileError("payload sizes must be positive")
    return level.avg_size_kb / full.avg_size_kb


def raw_cost(level: FidelityLevel, profile: CostProfile) -> float:
    """Unnormalized tier-aware cost: tier base cost plus weighted size ratio."""
    profile.level(level.id)
    return level.tier_base_cost + profile.w_bw * size_ratio(level, profile.full)


def normalized_costs(profile: CostProfile) -> dict[str, float]:
    """Costs rescaled so the reference (last) level costs the target exactly.

    The reference level's ratio is computed as x / x = 1.0, so its normalized
    cost is bit-exactly the target. Raises ProfileError unless the result is
    strictly increasing along the level order.
    """
    ref = raw_cost(profile.full, profile)
    out: dict[str, float] = {}
    for lv in profile.levels:
        out[lv.id] = (raw_cost(lv, profile) / ref) * profile.normalization_target
    costs = list(out.values())
    for a, b in zip(costs, costs[1:]):
        if not a < b:
            raise ProfileError(
                "normalized costs must strictly increase along the level order; "
                f"got {[round(c, 4) for c in costs]}"
            )
    return out


_STANDARD_SIZES_KB = {
    "caption": 0.05,
    "resize_32": 1.0,
    "jpeg_q1": 12.0,
    "jpeg_q10": 45.0,
    "full": 650.0,
}

# (tier base costs in level order, bandwidth weight) per deployment profile
_BUILTIN_PARAMS = {
    "edge-cloud": ((0.08, 0.16, 0.40, 0.56, 1.00), 0.06),
    "agentic-memory": ((0.06, 0.12, 0.36, 0.52, 1.00), 0.06),
    "cps-iot": ((0.04, 0.10, 0.30, 0.46, 1.00), 0.12),
}

BUILTIN_PROFILE_NAMES = tuple(_BUILTIN_PARAMS)


def builtin_profile(name: str) -> CostProfile:
    """One of the shipped deployment profiles: edge-cloud, agentic-memory, cps-iot."""
    try:
        bases, w_bw = _BUILTIN_PARAMS[name]
    except KeyError:
        raise ProfileError(
            f"unknown profile {name!r}; builtins are {', '.join(BUILTIN_PROFILE_NAMES)}"
        ) from None
    levels = tuple(
        FidelityLevel(id=fid, avg_size_kb=size, tier_base_cost=base)
        for (fid, size), base in zip(_STANDARD_SIZES_KB.items(), bases)
    )
    profile = CostProfile(levels=levels, w_bw=w_bw)
    profile.validate()
    return profile


def load_profile(name_or_path: str | Path) -> CostProfile:
    """Resolve a builtin profile name, else load a profile config file."""
    name = str(name_or_path)
    if name in _BUILTIN_PARAMS:
        return builtin_profile(name)
    path = Path(name_or_path)
    if path.exists():
        return CostProfile.from_file(path)
    raise ProfileError(
        f"{name!r} is neither a builtin profile ({', '.join(BUILTIN_PROFILE_NAMES)}) "
        "nor an existing file"
    )
