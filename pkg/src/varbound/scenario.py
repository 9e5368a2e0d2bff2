"""Scenario configuration: a JSON document describing the experiment, the
objective, and optional data, validated with JSON-pointer style findings.

Schema sketch::

    {
      "n": 2,
      "design":    {"kind": "bernoulli", "p": 0.5}
                 | {"kind": "complete-randomization", "m": 1}
                 | {"kind": "cluster", "clusters": [[0,1],[2,3]], "m": 1}
                 | {"kind": "paired", "pairs": [[0,1],[2,3]]}
                 | {"kind": "explicit", "assignments": [[1,0],[0,1]],
                    "probabilities": [0.5, 0.5]},
      "exposure":  {"rule": "identity"}
                 | {"rule": "spillover", "adjacency": [[1],[0]],
                    "contrast": ["direct", "indirect"]}
                 | {"rule": "table", "labels": [...], "contrast": [a, b],
                    "entries": [{"assignment": [...], "labels": [...]}, ...]},
      "estimator": {"kind": "horvitz-thompson", "covariates": "X.csv" | [[...]]},
      "threshold_c": 0.0,
      "mode": {"kind": "exact"} | {"kind": "mc", "count": 100000, "seed": 1},
      "objective": {"terms": [{"weight": 1.0, "term": "schatten", "p": 2},
                              {"weight": 0.01, "term": "targeted", "W": "W.csv"},
                              {"weight": 0.1, "term": "frobenius-squared"}]},
      "solver": {"rho": 1.0, "max_iterations": 50000, "eps_abs": 1e-9,
                 "eps_rel": 1e-7, "feasibility_tol": 1e-7},
      "theta": "theta.csv" | [...],
      "realized": "data.json" | {"z": [1,0], "outcomes": {"1": 3.2, "4": -0.5}}
    }

Adjacency lists are 0-based. Realized outcome keys are 1-based, matching the
theta coordinate convention used in reports, and convert to 0-based inside.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import matrixio
from .errors import ParseError, ValidationError, VarboundError
from .estimation import RealizedData
from .experiment import Design, EstimatorSpec, ExposureModel
from .solver import (
    FrobeniusSquaredTerm,
    Objective,
    SchattenTerm,
    SolverConfig,
    TargetedTerm,
)


@dataclass(frozen=True, eq=False)
class Scenario:
    n: int
    design: Design
    model: ExposureModel
    estimator: EstimatorSpec
    threshold_c: float = 0.0
    mode: dict = field(default_factory=lambda: {"kind": "exact"})
    objective: Objective | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    theta: np.ndarray | None = None
    realized: RealizedData | None = None


def builtin_scenario_path(name):
    """Path of a scenario shipped with the package (e.g. 'illustration')."""
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("varbound").joinpath(f"scenarios/{stem}.json")
    if not ref.is_file():
        raise ParseError(f"no built-in scenario named {name!r}")
    return Path(str(ref))


def resolve_config_path(spec):
    """An existing path, or the name of a shipped scenario."""
    path = Path(spec)
    if path.exists():
        return path
    try:
        return builtin_scenario_path(str(spec))
    except ParseError:
        raise ParseError(f"config {spec!r} is neither a file nor a built-in scenario")


class _Findings:
    """Collects (json-pointer, message) validation findings."""

    def __init__(self):
        self.items = []

    def add(self, pointer, message):
        self.items.append((pointer, str(message)))

    def raise_if_any(self):
        if self.items:
            raise ValidationError(self.items)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _resolve_matrix(value, base, pointer, findings):
    """A matrix given inline as nested arrays or as a path relative to the config."""
    try:
        if isinstance(value, str):
            return matrixio.read_matrix(_relative(base, value))
        return np.asarray(value, dtype=float)
    except (VarboundError, ValueError) as exc:
        findings.add(pointer, exc)
        return None


def _relative(base, value):
    path = Path(value)
    return path if path.is_absolute() else Path(base).parent / path


def _parse_design(doc, n, findings):
    raw = doc.get("design")
    if not isinstance(raw, dict):
        findings.add("/design", "missing or not an object")
        return None
    kind = raw.get("kind")
    try:
        if kind == "bernoulli":
            return Design.bernoulli(n, raw.get("p", 0.5))
        if kind == "complete-randomization":
            return Design.complete(n, int(raw["m"]))
        if kind == "cluster":
            return Design.cluster(raw["clusters"], int(raw["m"]))
        if kind == "paired":
            return Design.paired(raw["pairs"])
        if kind == "explicit":
            return Design.explicit(list(zip(raw["assignments"], raw["probabilities"])))
        findings.add("/design/kind", f"unknown design kind {kind!r}")
    except KeyError as exc:
        findings.add("/design", f"missing field {exc}")
    except (VarboundError, TypeError, ValueError) as exc:
        findings.add("/design", exc)
    return None


def _parse_exposure(doc, n, findings):
    raw = doc.get("exposure")
    if not isinstance(raw, dict):
        findings.add("/exposure", "missing or not an object")
        return None
    rule = raw.get("rule")
    try:
        if rule == "identity":
            return ExposureModel.identity(n)
        if rule == "spillover":
            adjacency = raw["adjacency"]
            if len(adjacency) != n:
                findings.add("/exposure/adjacency", f"has {len(adjacency)} rows, expected {n}")
                return None
            contrast = tuple(raw.get("contrast", ("direct", "indirect")))
            return ExposureModel.spillover(adjacency, contrast)
        if rule == "table":
            entries = raw["entries"]
            table = {tuple(e["assignment"]): tuple(e["labels"]) for e in entries}
            return ExposureModel.from_table(
                n, tuple(raw["labels"]), table, tuple(raw["contrast"])
            )
        findings.add("/exposure/rule", f"unknown exposure rule {rule!r}")
    except KeyError as exc:
        findings.add("/exposure", f"missing field {exc}")
    except (VarboundError, TypeError, ValueError) as exc:
        findings.add("/exposure", exc)
    return None


def _parse_estimator(doc, base, findings):
    raw = doc.get("estimator")
    if not isinstance(raw, dict):
        findings.add("/estimator", "missing or not an object")
        return None
    covariates = None
    if "covariates" in raw:
        covariates = _resolve_matrix_any(raw["covariates"], base, "/estimator/covariates", findings)
    try:
        return EstimatorSpec(kind=raw.get("kind", ""), covariates=covariates)
    except VarboundError as exc:
        findings.add("/estimator", exc)
        return None


def _resolve_matrix_any(value, base, pointer, findings):
    """Like _resolve_matrix but without symmetry requirements (covariates)."""
    try:
        if isinstance(value, str):
            path = _relative(base, value)
            text = Path(path).read_text()
            rows = [
                [float(x) for x in line.split(",")]
                for line in text.splitlines()
                if line.strip()
            ]
            return np.asarray(rows, dtype=float)
        return np.asarray(value, dtype=float)
    except (OSError, ValueError) as exc:
        findings.add(pointer, exc)
        return None


def _parse_p(value, pointer, findings):
    if value in ("inf", "Infinity", "infinity"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        findings.add(pointer, f"bad Schatten exponent {value!r}")
        return None


def _parse_objective(doc, base, findings):
    raw = doc.get("objective")
    if raw is None:
        return None
    terms = raw.get("terms")
    if not isinstance(terms, list) or not terms:
        findings.add("/objective/terms", "must be a nonempty list")
        return None
    parsed = []
    for i, item in enumerate(terms):
        ptr = f"/objective/terms/{i}"
        weight = item.get("weight", 1.0)
        name = item.get("term")
        try:
            if name == "schatten":
                p = _parse_p(item.get("p", 2), f"{ptr}/p", findings)
                if p is None:
                    return None
                parsed.append((float(weight), SchattenTerm(p=p)))
            elif name == "targeted":
                W = _resolve_matrix(item.get("W"), base, f"{ptr}/W", findings)
                if W is None:
                    return None
                parsed.append((float(weight), TargetedTerm(W=W)))
            elif name == "frobenius-squared":
                parsed.append((float(weight), FrobeniusSquaredTerm()))
            else:
                findings.add(f"{ptr}/term", f"unknown term {name!r}")
                return None
        except (VarboundError, TypeError, ValueError) as exc:
            findings.add(ptr, exc)
            return None
    try:
        return Objective.composite(parsed)
    except VarboundError as exc:
        findings.add("/objective", exc)
        return None


_SOLVER_KEYS = ("rho", "max_iterations", "eps_abs", "eps_rel", "feasibility_tol")


def _parse_solver(doc, findings):
    raw = doc.get("solver", {})
    if not isinstance(raw, dict):
        findings.add("/solver", "must be an object")
        return SolverConfig()
    kwargs = {}
    for key in raw:
        if key not in _SOLVER_KEYS:
            findings.add(f"/solver/{key}", "unknown solver option")
    for key in _SOLVER_KEYS:
        if key in raw:
            kwargs[key] = int(raw[key]) if key == "max_iterations" else float(raw[key])
    try:
        return SolverConfig(**kwargs)
    except VarboundError as exc:
        findings.add("/solver", exc)
        return SolverConfig()


def _parse_mode(doc, findings):
    raw = doc.get("mode", {"kind": "exact"})
    if not isinstance(raw, dict) or raw.get("kind") not in ("exact", "mc"):
        findings.add("/mode", "must be {'kind': 'exact'} or {'kind': 'mc', ...}")
        return {"kind": "exact"}
    if raw["kind"] == "mc":
        out = {"kind": "mc"}
        if "count" not in raw:
            findings.add("/mode/count", "mc mode needs a sample count")
        else:
            out["count"] = int(raw["count"])
        out["seed"] = int(raw.get("seed", 0))
        return out
    return {"kind": "exact"}


def _parse_realized(doc, base, n, findings):
    raw = doc.get("realized")
    if raw is None:
        return None
    if isinstance(raw, str):
        try:
            raw = _load_json(_relative(base, raw))
        except ParseError as exc:
            findings.add("/realized", exc)
            return None
    try:
        z = raw["z"]
        outcomes = raw["outcomes"]
        if len(z) != n:
            findings.add("/realized/z", f"length {len(z)} != n = {n}")
            return None
        # outcome keys are 1-based in files
        converted = {}
        for key, value in outcomes.items():
            k = int(key)
            if not 1 <= k <= 2 * n:
                findings.add(f"/realized/outcomes/{key}", f"index out of range 1..{2 * n}")
                return None
            converted[k - 1] = float(value)
        return RealizedData(z=tuple(z), outcomes=converted)
    except (KeyError, TypeError, ValueError) as exc:
        findings.add("/realized", exc)
        return None


def parse_scenario(path):
    """Parse and fully validate a scenario file.

    Raises ParseError for malformed JSON and ValidationError carrying every
    finding (JSON-pointer, message) otherwise.
    """
    path = Path(path)
    doc = _load_json(path)
    findings = _Findings()
    if not isinstance(doc, dict):
        findings.add("", "scenario must be a JSON object")
        findings.raise_if_any()
    n = doc.get("n")
    if not isinstance(n, int) or n < 1:
        findings.add("/n", f"must be a positive integer, got {n!r}")
        findings.raise_if_any()

    design = _parse_design(doc, n, findings)
    model = _parse_exposure(doc, n, findings)
    estimator = _parse_estimator(doc, path, findings)
    threshold_c = doc.get("threshold_c", 0.0)
    if not isinstance(threshold_c, (int, float)) or threshold_c < 0:
        findings.add("/threshold_c", f"must be a nonnegative number, got {threshold_c!r}")
        threshold_c = 0.0
    mode = _parse_mode(doc, findings)
    objective = _parse_objective(doc, path, findings)
    solver = _parse_solver(doc, findings)

    theta = None
    if "theta" in doc:
        raw_theta = doc["theta"]
        try:
            if isinstance(raw_theta, str):
                theta = matrixio.read_vector(_relative(path, raw_theta))
            else:
                theta = np.asarray(raw_theta, dtype=float)
            if theta.shape != (2 * n,):
                findings.add("/theta", f"length {theta.shape} != 2n = {2 * n}")
        except (VarboundError, ValueError) as exc:
            findings.add("/theta", exc)

    realized = _parse_realized(doc, path, n, findings)

    if design is not None and design.n != n:
        findings.add("/design", f"design is for {design.n} units, scenario says {n}")
    if model is not None and model.n != n:
        findings.add("/exposure", f"exposure model is for {model.n} units, scenario says {n}")
    if (
        estimator is not None
        and estimator.covariates is not None
        and estimator.covariates.shape[0] != n
    ):
        findings.add(
            "/estimator/covariates",
            f"{estimator.covariates.shape[0]} rows, expected {n}",
        )

    findings.raise_if_any()
    return Scenario(
        n=n, design=design, model=model, estimator=estimator,
        threshold_c=float(threshold_c), mode=mode, objective=objective,
        solver=solver, theta=theta, realized=realized,
    )
