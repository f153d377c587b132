"""Configuration, CSV ingestion and the line-delimited result artifact."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .hasse import FeatureSpace, Partition, PartitionMatrix, sigma_labels
from .loss import Dataset, LossConfig, OutcomeModel
from .rashomon import RashomonSet, RPSEntry

ARTIFACT_FORMAT = "rashomon-partition-set"
ARTIFACT_VERSION = 1


class DataError(ValueError):
    """Input data or artifact content is invalid."""


class ConfigError(ValueError):
    """A configuration is malformed."""


@dataclass(frozen=True)
class FeatureDecl:
    """One feature: its column name and ordered level labels.

    In profile mode the first label is the control (inactive) level.
    """

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(v) for v in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ConfigError(f"feature {self.name!r} has duplicate level labels")
        if not labels:
            raise ConfigError(f"feature {self.name!r} has no levels")


@dataclass
class RunConfig:
    """Everything needed to run an enumeration.

    Only ``features`` is required; the remaining fields have defaults that
    match the command-line defaults.
    """

    features: list[FeatureDecl]
    outcome: str = "y"
    data: str | None = None
    lam: float = 0.01
    epsilon: float = 0.1
    reference: str = "fullsplit"
    cross_profile: bool = True
    single_profile: bool = False
    h_max: int | None = None
    max_rps: int | None = None
    seed: int = 0
    outcome_model: str = "constant"
    strict: bool = True
    out: str | None = None
    jobs: int = 1

    _KEYS = {"features", "outcome", "data", "lambda", "lam", "epsilon", "reference", "cross_profile",
             "single_profile", "h_max", "max_rps", "seed", "outcome_model", "strict", "out", "jobs"}

    def __post_init__(self):
        if not self.features:
            raise ConfigError("at least one feature must be declared")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")
        if self.outcome in names:
            raise ConfigError("the outcome column cannot also be a feature")
        if not self.lam >= 0:
            raise ConfigError("lambda must be non-negative")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be non-negative")
        parse_reference(self.reference)
        OutcomeModel(self.outcome_model)

    def space(self) -> FeatureSpace:
        return FeatureSpace(tuple(len(f.labels) for f in self.features), self.single_profile,
                            tuple(f.name for f in self.features))

    def level_of(self, feature: int, label: str) -> int:
        offset = 1 if self.single_profile else 0
        return self.features[feature].labels.index(label) + offset

    def label_of(self, feature: int, level: int) -> str:
        offset = 1 if self.single_profile else 0
        return self.features[feature].labels[level - offset]

    def loss_config(self, weights=None) -> LossConfig:
        return LossConfig(lam=self.lam, outcome_model=self.outcome_model, weights=weights, strict=self.strict)

    def to_mapping(self, echo: bool = False) -> dict:
        """Plain mapping; ``echo=True`` drops fields that must not affect artifacts."""
        out = {
            "features": [{"name": f.name, "levels": list(f.labels)} for f in self.features],
            "outcome": self.outcome,
            "data": self.data,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "reference": self.reference,
            "cross_profile": self.cross_profile,
            "single_profile": self.single_profile,
            "h_max": self.h_max,
            "max_rps": self.max_rps,
            "seed": self.seed,
            "outcome_model": self.outcome_model,
            "strict": self.strict,
        }
        if not echo:
            out["out"] = self.out
            out["jobs"] = self.jobs
        return out

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "RunConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError("configuration must be a key/value mapping")
        unknown = set(raw) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        if "features" not in raw:
            raise ConfigError("configuration needs a 'features' list")
        feats = []
        for item in raw["features"]:
            if not isinstance(item, Mapping) or "name" not in item or "levels" not in item:
                raise ConfigError("each feature needs 'name' and 'levels'")
            feats.append(FeatureDecl(str(item["name"]), tuple(item["levels"])))
        kwargs = {k: raw[k] for k in ("outcome", "data", "epsilon", "reference", "cross_profile",
                                      "single_profile", "h_max", "max_rps", "seed", "outcome_model",
                                      "strict", "out", "jobs") if k in raw}
        if "lambda" in raw or "lam" in raw:
            kwargs["lam"] = float(raw.get("lambda", raw.get("lam")))
        if "epsilon" in kwargs:
            kwargs["epsilon"] = float(kwargs["epsilon"])
        return cls(feats, **kwargs)


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a YAML or JSON configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read configuration {path}: {err}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"configuration {path} is not valid YAML/JSON: {err}") from None
    return RunConfig.from_mapping(raw or {})


def parse_reference(spec: str) -> tuple[str, str | None]:
    """Split a reference option into ``(mode, path)``."""
    if spec in ("fullsplit", "greedy"):
        return spec, None
    if spec.startswith("file:") and len(spec) > 5:
        return "explicit", spec[5:]
    raise ConfigError(f"reference must be fullsplit, greedy or file:PATH, got {spec!r}")


def ingest_csv(path: str | os.PathLike, config: RunConfig) -> Dataset:
    """Aggregate a comma-delimited file into a :class:`Dataset`.

    Row numbers in error messages count the header as row 1.
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        needed = [f.name for f in config.features] + [config.outcome]
        missing = [c for c in needed if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        cols = [header.index(f.name) for f in config.features]
        ycol = header.index(config.outcome)
        lookups = [{lab: config.level_of(m, lab) for lab in f.labels} for m, f in enumerate(config.features)]
        X, y = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
            levels = []
            for m, c in enumerate(cols):
                label = row[c].strip()
                if label not in lookups[m]:
                    raise DataError(f"{path}: row {rowno}, column {config.features[m].name!r}: "
                                    f"unknown level label {label!r}")
                levels.append(lookups[m][label])
            try:
                value = float(row[ycol])
            except ValueError:
                raise DataError(f"{path}: row {rowno}, column {config.outcome!r}: "
                                f"non-numeric outcome {row[ycol]!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{path}: row {rowno}, column {config.outcome!r}: outcome is not finite")
            X.append(levels)
            y.append(value)
    if not y:
        raise DataError(f"{path} has a header but no data rows")
    return Dataset.from_observations(config.space(), np.array(X, dtype=np.int64), np.array(y))


def load_reference_sigmas(path: str | os.PathLike, space: FeatureSpace) -> dict:
    """Read explicit reference matrices: a mapping from profile strings to row strings.

    Example: ``{"11": ["01", "10"]}``.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read reference file {path}: {err}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError("reference file must map profiles to partition-matrix rows")
    out = {}
    for key, rows in raw.items():
        profile = _parse_profile(str(key), space.num_features)
        sigma = PartitionMatrix.from_strings(profile, [str(r) for r in rows])
        sigma.check_shape(space)
        out[profile] = sigma
    return out


def _parse_profile(text: str, M: int) -> tuple[int, ...]:
    if len(text) != M or set(text) - {"0", "1"}:
        raise DataError(f"bad profile {text!r}")
    return tuple(int(c) for c in text)


def _profile_str(rho) -> str:
    return "".join(str(v) for v in rho)


def _float(v):
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        raise DataError("non-finite value in artifact")
    return v


def artifact_lines(rps: RashomonSet, config: Mapping | None = None) -> list[str]:
    """Serialize a Rashomon set as JSON lines (header first, then one line per entry)."""
    space = rps.space
    header = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "config": dict(config or {}),
        "space": {"levels": list(space.levels), "single_profile": space.single_profile,
                  "names": list(space.feature_names())},
        "profiles": [_profile_str(r) for r in rps.profiles],
        "outcome_model": rps.outcome_model.value,
        "lambda": rps.lam,
        "q0": rps.q0,
        "epsilon": rps.epsilon,
        "theta": rps.theta,
        "partial": rps.partial,
        "meta": rps.meta,
        "n_entries": len(rps),
    }
    lines = [json.dumps(header, allow_nan=False)]
    for rank, e in enumerate(rps.entries):
        if rps.outcome_model is OutcomeModel.LINEAR:
            values = [None if v is None else [_float(c) for c in v] for v in e.pool_values]
        else:
            values = [_float(v) for v in e.pool_values]
        rec = {
            "rank": rank,
            "sigma": [list(s.to_strings()) for s in e.sigmas],
            "merges": [[list(p) for p in block] for block in e.merges],
            "q": e.q,
            "loss": e.loss,
            "n_pools": e.n_pools,
            "weight": e.weight,
            "pool_values": values,
        }
        lines.append(json.dumps(rec, allow_nan=False))
    return lines


def write_artifact(rps: RashomonSet, path: str | os.PathLike, config: Mapping | None = None) -> None:
    """Write the artifact atomically (temporary file, then rename)."""
    path = Path(path)
    text = "\n".join(artifact_lines(rps, config)) + "\n"
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _entry_partition(space: FeatureSpace, profiles, sigmas, merges) -> Partition:
    pieces = {}
    for r, (rho, sigma) in enumerate(zip(profiles, sigmas)):
        cells = space.profile_indices(rho)
        labels = sigma_labels(sigma)
        for g in range(sigma.n_pools()):
            pieces[(r, g)] = cells[labels == g]
    blocks = [set(map(tuple, block)) for block in merges]
    merged = set().union(*blocks) if blocks else set()
    groups = [sorted(b) for b in blocks] + [[p] for p in sorted(pieces) if p not in merged]
    pools = []
    for group in groups:
        idx = np.sort(np.concatenate([pieces[p] for p in group]))
        pools.append(tuple(space.combination(int(c)) for c in idx))
    return Partition(tuple(pools))


def read_artifact(path: str | os.PathLike) -> tuple[RashomonSet, dict]:
    """Parse an artifact back into a :class:`RashomonSet` and its config echo."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise DataError(f"cannot read artifact {path}: {err}") from None
    try:
        header = json.loads(lines[0])
        if header.get("format") != ARTIFACT_FORMAT:
            raise DataError(f"{path} is not a Rashomon set artifact")
        if header.get("version") != ARTIFACT_VERSION:
            raise DataError(f"unsupported artifact version {header.get('version')}")
        sp = header["space"]
        space = FeatureSpace(tuple(sp["levels"]), sp["single_profile"], tuple(sp["names"]))
        profiles = tuple(_parse_profile(p, space.num_features) for p in header["profiles"])
        model = OutcomeModel(header["outcome_model"])
        entries = []
        for line in lines[1:]:
            if not line.strip():
                continue
            rec = json.loads(line)
            sigmas = tuple(PartitionMatrix.from_strings(rho, rows) for rho, rows in zip(profiles, rec["sigma"]))
            for s in sigmas:
                s.check_shape(space)
            merges = tuple(tuple(tuple(int(v) for v in p) for p in block) for block in rec["merges"])
            partition = _entry_partition(space, profiles, sigmas, merges)
            if model is OutcomeModel.LINEAR:
                values = tuple(None if v is None else tuple(float(c) for c in v) for v in rec["pool_values"])
            else:
                values = tuple(None if v is None else float(v) for v in rec["pool_values"])
            if len(values) != len(partition) or rec["n_pools"] != len(partition):
                raise DataError(f"{path}: entry {rec.get('rank')} is inconsistent")
            entries.append(RPSEntry(sigmas, merges, partition, float(rec["loss"]), float(rec["q"]), values))
        if len(entries) != header["n_entries"]:
            raise DataError(f"{path}: expected {header['n_entries']} entries, found {len(entries)}")
        rps = RashomonSet(space, profiles, entries, float(header["q0"]), float(header["epsilon"]),
                          float(header["theta"]), float(header["lambda"]), model, bool(header["partial"]),
                          dict(header.get("meta", {})))
    except DataError:
        raise
    except (IndexError, KeyError, TypeError, ValueError) as err:
        raise DataError(f"malformed artifact {path}: {err}") from None
    return rps, header.get("config", {})
