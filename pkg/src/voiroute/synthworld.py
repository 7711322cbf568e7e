"""Synthetic corpora with known per-fidelity success probabilities.

Each generated question belongs to an archetype with distinctive marker
tokens (so archetypes are linearly separable in TF-IDF space) and a known
true success probability per fidelity. Correctness bits are Bernoulli draws
from those probabilities, making the generated corpus an exact oracle for
calibration and routing claims that would otherwise require running a
vision-language model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import CorrectnessRecord, Dataset

# fixed filler list, disjoint from every builtin archetype's marker tokens
FILLER_TOKENS: tuple[str, ...] = (
    "the", "a", "an", "of", "in", "at", "this", "that", "near", "beside",
    "image", "picture", "photo", "scene", "shown", "visible", "area", "region",
    "corner", "edge", "middle", "center", "small", "large", "tiny", "huge",
    "bright", "dark", "blurry", "clear", "people", "person", "thing", "items",
    "group", "some", "any", "one", "two", "three", "with", "without", "and",
    "or", "from", "into", "about", "around", "over", "across",
)


@dataclass(frozen=True)
class Archetype:
    name: str
    marker_tokens: tuple[str, ...]
    true_p: dict[str, float]
    weight: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("archetype name must be non-empty")
        if not self.marker_tokens:
            raise ValueError(f"archetype {self.name!r} needs marker tokens")
        if self.weight <= 0:
            raise ValueError(f"archetype {self.name!r}: weight must be > 0")
        for fid, p in self.true_p.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(
                    f"archetype {self.name!r}: true_p[{fid!r}]={p} outside [0, 1]"
                )


@dataclass(frozen=True)
class WorldSpec:
    """Archetype mix, fidelity order, corpus size, and the generation seed."""

    archetypes: tuple[Archetype, ...]
    fidelities: tuple[str, ...]
    n_questions: int
    seed: int

    def __post_init__(self) -> None:
        if not self.archetypes:
            raise ValueError("world needs at least one archetype")
        if not self.fidelities:
            raise ValueError("world needs at least one fidelity")
        if self.n_questions < 1:
            raise ValueError("n_questions must be >= 1")
        for arch in self.archetypes:
            missing = [f for f in self.fidelities if f not in arch.true_p]
            if missing:
                raise ValueError(
                    f"archetype {arch.name!r} lacks true_p for fidelities {missing}"
                )

    def archetype(self, name: str) -> Archetype:
        for arch in self.archetypes:
            if arch.name == name:
                return arch
        raise KeyError(f"unknown archetype {name!r}")

    def to_json_dict(self) -> dict:
        return {
            "fidelities": list(self.fidelities),
            "n_questions": self.n_questions,
            "seed": self.seed,
            "archetypes": [
                {
                    "name": a.name,
                    "markers": list(a.marker_tokens),
                    "true_p": dict(a.true_p),
                    "weight": a.weight,
                }
                for a in self.archetypes
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "WorldSpec":
        return cls(
            archetypes=tuple(
                Archetype(
                    name=a["name"],
                    marker_tokens=tuple(a["markers"]),
                    true_p={k: float(v) for k, v in a["true_p"].items()},
                    weight=float(a["weight"]),
                )
                for a in obj["archetypes"]
            ),
            fidelities=tuple(obj["fidelities"]),
            n_questions=int(obj["n_questions"]),
            seed=int(obj["seed"]),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "WorldSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class GeneratedCorpus:
    dataset: Dataset
    truth: dict[str, str]

    def true_prob_table(self, spec: WorldSpec) -> dict[str, dict[str, float]]:
        """qid -> fidelity -> true success probability."""
        return {
            qid: dict(spec.archetype(name).true_p) for qid, name in self.truth.items()
        }


def generate(spec: WorldSpec) -> GeneratedCorpus:
    """Sample a corpus: archetype by weight, marker-plus-filler question text,
    one Bernoulli correctness record per fidelity. Reproducible from the seed."""
    rng = np.random.default_rng(spec.seed)
    weights = np.asarray([a.weight for a in spec.archetypes], dtype=float)
    weights = weights / weights.sum()
    width = max(5, len(str(spec.n_questions - 1)))
    records: list[CorrectnessRecord] = []
    truth: dict[str, str] = {}
    for i in range(spec.n_questions):
        arch = spec.archetypes[int(rng.choice(len(spec.archetypes), p=weights))]
        n_fillers = int(rng.integers(3, 9))
        fillers = [FILLER_TOKENS[int(j)] for j in rng.integers(0, len(FILLER_TOKENS), n_fillers)]
        text = " ".join([*arch.marker_tokens, *fillers])
        qid = f"q{i:0{width}d}"
        truth[qid] = arch.name
        for fid in spec.fidelities:
            correct = int(rng.random() < arch.true_p[fid])
            records.append(CorrectnessRecord(qid, text, fid, correct))
    return GeneratedCorpus(dataset=Dataset(records), truth=truth)


def true_success(
    spec: WorldSpec, qid: str, truth: Mapping[str, str], fidelity_id: str
) -> float:
    """Known success probability for a generated question at one fidelity."""
    try:
        name = truth[qid]
    except KeyError:
        raise KeyError(f"qid {qid!r} is not in the truth table") from None
    arch = spec.archetype(name)
    if fidelity_id not in arch.true_p:
        raise KeyError(f"unknown fidelity {fidelity_id!r} for archetype {name!r}")
    return arch.true_p[fidelity_id]


def write_truth(truth: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, name in truth.items():
            fh.write(json.dumps({"qid": qid, "archetype": name}) + "\n")


def load_truth(path: str | Path) -> dict[str, str]:
    truth: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            truth[obj["qid"]] = obj["archetype"]
    return truth


_STANDARD_FIDELITIES = ("caption", "resize_32", "jpeg_q1", "jpeg_q10", "full")


def _arch(name, markers, probs, weight) -> Archetype:
    return Archetype(
        name=name,
        marker_tokens=markers,
        true_p=dict(zip(_STANDARD_FIDELITIES, probs)),
        weight=weight,
    )


def _heterogeneous_mix() -> tuple[Archetype, ...]:
    # designed so no single fixed fidelity is utility-optimal for the mix:
    # cheap questions answerable from captions, counting/OCR archetypes that
    # need high fidelity, and mid archetypes satisfied by compressed levels
    return (
        _arch("easy_yesno", ("is", "there"), (0.90, 0.91, 0.90, 0.89, 0.89), 0.40),
        _arch("counting", ("how", "many"), (0.10, 0.40, 0.65, 0.88, 0.90), 0.20),
        _arch("ocr_text", ("read", "sign"), (0.05, 0.35, 0.62, 0.85, 0.97), 0.15),
        _arch("color_attr", ("color", "shade"), (0.30, 0.62, 0.84, 0.86, 0.87), 0.125),
        _arch("spatial_rel", ("left", "behind"), (0.40, 0.76, 0.78, 0.79, 0.80), 0.125),
    )


def _monotone() -> tuple[Archetype, ...]:
    return (
        _arch("trivial", ("weather", "sky"), (0.85, 0.88, 0.90, 0.92, 0.95), 0.25),
        _arch("gradual", ("vehicle", "street"), (0.20, 0.35, 0.55, 0.75, 0.90), 0.25),
        _arch("cliff_mid", ("window", "building"), (0.10, 0.15, 0.70, 0.80, 0.85), 0.25),
        _arch("cliff_high", ("label", "package"), (0.05, 0.10, 0.20, 0.50, 0.90), 0.25),
    )


def _adversarial() -> tuple[Archetype, ...]:
    # plateau_jump stalls the greedy walk on tiny intermediate gains while the
    # single-step selector jumps straight to full; dip is non-monotone
    return (
        _arch("plateau_jump", ("serial", "digits"), (0.50, 0.52, 0.53, 0.54, 0.97), 0.40),
        _arch("easy", ("animal", "grass"), (0.80, 0.85, 0.88, 0.90, 0.92), 0.30),
        _arch("dip", ("chart", "axis"), (0.30, 0.60, 0.55, 0.70, 0.85), 0.30),
    )


_BUILTIN_WORLDS = {
    "heterogeneous-mix": _heterogeneous_mix,
    "monotone": _monotone,
    "adversarial": _adversarial,
}

BUILTIN_WORLD_NAMES = tuple(_BUILTIN_WORLDS)


def builtin_world(name: str, n_questions: int, seed: int) -> WorldSpec:
    """One of the shipped worlds: heterogeneous-mix, monotone, adversarial."""
    try:
        archetypes = _BUILTIN_WORLDS[name]()
    except KeyError:
        raise ValueError(
            f"unknown world {name!r}; builtins are {', '.join(BUILTIN_WORLD_NAMES)}"
        ) from None
    return WorldSpec(
        archetypes=archetypes,
        fidelities=_STANDARD_FIDELITIES,
        n_questions=n_questions,
        seed=seed,
    )


def load_world(name_or_path: str | Path, n_questions: int, seed: int) -> WorldSpec:
    """Resolve a builtin world name, else load a world spec file.

    For spec files, n_questions and seed override the stored values so CLI
    flags stay authoritative.
    """
    name = str(name_or_path)
    if name in _BUILTIN_WORLDS:
        return builtin_world(name, n_questions=n_questions, seed=seed)
    path = Path(name_or_path)
    if path.exists():
        spec = WorldSpec.from_file(path)
        return WorldSpec(
            archetypes=spec.archetypes,
            fidelities=spec.fidelities,
            n_questions=n_questions,
            seed=seed,
        )
    raise ValueError(
        f"{name!r} is neither a builtin world ({', '.join(BUILTIN_WORLD_NAMES)}) "
        "nor an existing file"
    )
