"""Experiment reports: per-level statistics, verdict rules and serialization.

Verdicts are computed from declarative rules stored with the report, so a
report loaded from JSON can be re-evaluated without rerunning anything.
Everything that depends on wall-clock time lives in ``runtime``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def _num(x):
    if isinstance(x, str):
        return float(x)
    return x


@dataclass(frozen=True)
class VerdictRule:
    """A pass/fail rule over the per-level statistics.

    kinds
        ``monotone``: ``key`` nonincreasing across levels, allowing ``band_key`` slack.
        ``monotone_abs1``: ``|key - 1|`` nonincreasing, allowing ``band_key`` slack.
        ``final_le``: ``key`` at the last level is ``<= threshold``.
        ``all_le``: ``key`` at every level is ``<= threshold``.
        ``all_true``: boolean ``key`` holds at every level.
        ``final_within``: ``|key - target| <= band_key`` (plus ``threshold``) at the last level.
    """

    name: str
    kind: str
    key: str
    threshold: float | None = None
    band_key: str | None = None
    target: float | None = None

    def evaluate(self, stats: list[dict]) -> bool:
        vals = [_num(row[self.key]) for row in stats if self.key in row]
        if not vals:
            return False
        bands = [_num(row.get(self.band_key, 0.0)) if self.band_key else 0.0
                 for row in stats if self.key in row]
        if self.kind == "monotone":
            return all(vals[i + 1] <= vals[i] + bands[i + 1] for i in range(len(vals) - 1))
        if self.kind == "monotone_abs1":
            d = [abs(v - 1.0) for v in vals]
            return all(d[i + 1] <= d[i] + bands[i + 1] for i in range(len(d) - 1))
        if self.kind == "final_le":
            return bool(vals[-1] <= self.threshold)
        if self.kind == "all_le":
            return all(v <= self.threshold for v in vals)
        if self.kind == "all_true":
            return all(bool(v) for v in vals)
        if self.kind == "final_within":
            slack = (self.threshold or 0.0) + bands[-1]
            return bool(abs(vals[-1] - self.target) <= slack)
        raise DomainError(f"unknown verdict rule kind {self.kind!r}")

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    schedule: list
    stats: list
    rules: list
    seed: int
    shards: int = 1
    defaults_version: str = ""
    notes: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.stats) != len(self.schedule):
            raise DomainError(
                f"expected one stat row per level: {len(self.schedule)} levels, {len(self.stats)} rows"
            )
        keys = [_schedule_key(s) for s in self.schedule]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise DomainError(f"schedule must be strictly increasing, got {self.schedule}")
        self.stats = [_clean(row) for row in self.stats]
        self.verdicts = self.evaluate()

    def evaluate(self) -> dict:
        return {r.name: r.evaluate(self.stats) for r in self.rules}

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "params": self.params,
            "defaults_version": self.defaults_version,
            "schedule": self.schedule,
            "stats": self.stats,
            "rules": [r.as_dict() for r in self.rules],
            "verdicts": self.verdicts,
            "notes": self.notes,
            "seed": self.seed,
            "shards": self.shards,
            "runtime": self.runtime,
        })

    def to_json(self, include_runtime: bool = True) -> str:
        d = self.to_dict()
        if not include_runtime:
            d.pop("runtime")
        return json.dumps(d, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = [_flatten(r) for r in self.stats]
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in cols})
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        rules = [VerdictRule(**r) for r in d["rules"]]
        return cls(d["experiment"], d["params"], d["schedule"], d["stats"], rules, d["seed"],
                   d.get("shards", 1), d.get("defaults_version", ""), d.get("notes", []),
                   d.get("runtime", {}))


def _schedule_key(s):
    if isinstance(s, (list, tuple)):
        return tuple(s)
    return s


def _flatten(row, prefix=""):
    out = {}
    for k, v in row.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = ";".join(str(x) for x in v)
        else:
            out[key] = v
    return out
