"""JSON file formats: instances, ballots, bias specs, triplets, results.

One JSON document describes one budgeting instance::

    {
      "m": 2, "n": 3,
      "external_budget": 0.0,
      "currency_unit": "currency/agent",            # informational
      "semantics": "nominal" | "per_capita",        # mandatory
      "mrs_convention": "n_scaled" | "n_free",      # mandatory
      "gain_curves": [{"kind": "log", "scale": 10.0},
                      {"kind": "power", "scale": 1.0, "exponent": 0.5},
                      {"kind": "log1p", "scale": 2.0}],
      "money_curve": {"kind": "power", "q": 0.5}
                   | {"kind": "kt", "q": 0.88, "r": 0.88, "loss_weight": 2.25},
      "tax_weights": [1.0, 1.0, 1.0],               # optional, sums to n
      "types":   [{"alloc_weights": [0.7, 0.3], "money_weight": 0.8}, ...],
      "ballots": [{"allocation": [0.7, 0.3], "tax": 69.4}, ...]
    }

``types`` and ``ballots`` are both optional but mutually exclusive.  All
loaders raise SchemaError with a pointed message on malformed input.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .curves import GainCurve, MoneyCurve
from .elicitation import Ballot
from .errors import SchemaError, UsvcgError
from .mechanism import Outcome
from .model import AgentType, BudgetDecision, BudgetInstance, CharacteristicTriplet
from .solver import (
    BiasSpec,
    ConstantTarget,
    EquitableTarget,
    TableTarget,
    TaxPreference,
)

__all__ = [
    "load_instance",
    "parse_instance",
    "instance_to_dict",
    "parse_ballots",
    "parse_bias",
    "load_bias",
    "bias_to_dict",
    "parse_sigma",
    "load_sigma",
    "parse_answers",
    "decision_to_dict",
    "decision_from_dict",
    "outcome_to_dict",
    "outcome_from_dict",
    "type_to_dict",
    "load_json",
    "write_json",
]


def load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be a JSON object")
    return doc


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing required field {key!r}")
    return doc[key]


def _number(doc: dict, key: str, where: str) -> float:
    v = _require(doc, key, where)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise SchemaError(f"{where}: field {key!r} must be a finite number, got {v!r}")
    return float(v)


# =============================================================================
# Curves
# =============================================================================


def gain_curve_from_dict(doc: dict, where: str = "gain curve") -> GainCurve:
    kind = _require(doc, "kind", where)
    try:
        if kind == "log":
            return GainCurve.log(_number(doc, "scale", where))
        if kind == "power":
            return GainCurve.power(_number(doc, "scale", where), _number(doc, "exponent", where))
        if kind == "log1p":
            return GainCurve.log1p(_number(doc, "scale", where))
    except UsvcgError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    raise SchemaError(f"{where}: unknown kind {kind!r}")


def gain_curve_to_dict(curve: GainCurve) -> dict:
    doc = {"kind": curve.kind, "scale": curve.scale}
    if curve.exponent is not None:
        doc["exponent"] = curve.exponent
    return doc


def money_curve_from_dict(doc: dict, where: str = "money curve") -> MoneyCurve:
    kind = _require(doc, "kind", where)
    try:
        if kind == "power":
            return MoneyCurve.power(_number(doc, "q", where))
        if kind == "kt":
            return MoneyCurve.kahneman_tversky(
                _number(doc, "q", where),
                _number(doc, "r", where),
                _number(doc, "loss_weight", where),
            )
    except UsvcgError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    raise SchemaError(f"{where}: unknown kind {kind!r}")


def money_curve_to_dict(curve: MoneyCurve) -> dict:
    doc = {"kind": curve.kind, "q": curve.q}
    if curve.kind == "kt":
        doc["r"] = curve.r
        doc["loss_weight"] = curve.loss_weight
    return doc


# =============================================================================
# Types, decisions, instances
# =============================================================================


def type_from_dict(doc: dict, where: str = "type") -> AgentType:
    weights = _require(doc, "alloc_weights", where)
    if not isinstance(weights, list):
        raise SchemaError(f"{where}: alloc_weights must be a list")
    try:
        return AgentType(tuple(float(w) for w in weights), _number(doc, "money_weight", where))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def type_to_dict(agent: AgentType) -> dict:
    return {"alloc_weights": list(agent.alloc_weights), "money_weight": agent.money_weight}


def decision_from_dict(doc: dict, where: str = "decision") -> BudgetDecision:
    alloc = _require(doc, "allocation", where)
    if not isinstance(alloc, list):
        raise SchemaError(f"{where}: allocation must be a list")
    try:
        return BudgetDecision(tuple(float(x) for x in alloc), _number(doc, "tax", where))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def decision_to_dict(decision: BudgetDecision) -> dict:
    return {"allocation": list(decision.allocation), "tax": decision.tax}


def parse_instance(doc: dict, where: str = "instance") -> tuple[BudgetInstance, list[Ballot] | None]:
    m = int(_number(doc, "m", where))
    n = int(_number(doc, "n", where))
    semantics = _require(doc, "semantics", where)
    convention = _require(doc, "mrs_convention", where)
    curves_doc = _require(doc, "gain_curves", where)
    if not isinstance(curves_doc, list) or len(curves_doc) != m:
        raise SchemaError(f"{where}: gain_curves must be a list of {m} descriptors")
    gain_curves = tuple(
        gain_curve_from_dict(c, f"{where}: gain_curves[{j}]") for j, c in enumerate(curves_doc)
    )
    money = money_curve_from_dict(_require(doc, "money_curve", where), f"{where}: money_curve")

    if "types" in doc and "ballots" in doc:
        raise SchemaError(f"{where}: give either types or ballots, not both")
    types = None
    if "types" in doc:
        if not isinstance(doc["types"], list):
            raise SchemaError(f"{where}: types must be a list")
        types = tuple(
            type_from_dict(t, f"{where}: types[{i}]") for i, t in enumerate(doc["types"])
        )
    ballots = None
    if "ballots" in doc:
        if not isinstance(doc["ballots"], list):
            raise SchemaError(f"{where}: ballots must be a list")
        ballots = []
        for i, b in enumerate(doc["ballots"]):
            alloc = _require(b, "allocation", f"{where}: ballots[{i}]")
            tax = _number(b, "tax", f"{where}: ballots[{i}]")
            try:
                ballots.append(Ballot.from_raw(alloc, tax))
            except UsvcgError as exc:
                raise SchemaError(f"{where}: ballots[{i}]: {exc}") from exc

    tax_weights = None
    if "tax_weights" in doc:
        if not isinstance(doc["tax_weights"], list):
            raise SchemaError(f"{where}: tax_weights must be a list")
        tax_weights = tuple(float(w) for w in doc["tax_weights"])

    try:
        instance = BudgetInstance(
            m=m,
            n=n,
            external_budget=_number(doc, "external_budget", where),
            gain_curves=gain_curves,
            money_curve=money,
            semantics=semantics,
            mrs_convention=convention,
            tax_weights=tax_weights,
            types=types,
        )
    except UsvcgError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return instance, ballots


def load_instance(path) -> tuple[BudgetInstance, list[Ballot] | None]:
    return parse_instance(load_json(path), where=str(path))


def instance_to_dict(instance: BudgetInstance, ballots=None) -> dict:
    doc = {
        "m": instance.m,
        "n": instance.n,
        "external_budget": instance.external_budget,
        "semantics": instance.semantics,
        "mrs_convention": instance.mrs_convention,
        "gain_curves": [gain_curve_to_dict(c) for c in instance.gain_curves],
        "money_curve": money_curve_to_dict(instance.money_curve),
    }
    if not instance.homogeneous_tax:
        doc["tax_weights"] = list(instance.tax_weights)
    if instance.types is not None:
        doc["types"] = [type_to_dict(t) for t in instance.types]
    if ballots is not None:
        doc["ballots"] = [decision_to_dict(b.decision) for b in ballots]
    return doc


# =============================================================================
# Bias specs
# =============================================================================


def parse_bias(doc: dict, where: str = "bias") -> BiasSpec:
    lam = _number(doc, "lambda", where)
    target_doc = _require(doc, "target", where)
    kind = _require(target_doc, "kind", f"{where}: target")
    try:
        if kind == "constant":
            target = ConstantTarget(tuple(float(x) for x in _require(target_doc, "allocation", where)))
        elif kind == "equitable":
            target = EquitableTarget()
        elif kind == "table":
            target = TableTarget(
                tuple(float(t) for t in _require(target_doc, "taxes", where)),
                tuple(tuple(float(x) for x in row) for row in _require(target_doc, "allocations", where)),
            )
        else:
            raise SchemaError(f"{where}: unknown target kind {kind!r}")
        psi = TaxPreference.none()
        if "psi" in doc:
            psi_doc = doc["psi"]
            psi_kind = _require(psi_doc, "kind", f"{where}: psi")
            if psi_kind == "none":
                psi = TaxPreference.none()
            elif psi_kind == "exp_decay":
                psi = TaxPreference.exp_decay(
                    _number(psi_doc, "amplitude", f"{where}: psi"),
                    _number(psi_doc, "decay_scale", f"{where}: psi"),
                )
            else:
                raise SchemaError(f"{where}: unknown psi kind {psi_kind!r}")
        return BiasSpec(lam=lam, target=target, psi=psi)
    except UsvcgError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: {exc}") from exc


def load_bias(path) -> BiasSpec:
    return parse_bias(load_json(path), where=str(path))


def bias_to_dict(bias: BiasSpec) -> dict:
    if isinstance(bias.target, ConstantTarget):
        target = {"kind": "constant", "allocation": list(bias.target.allocation)}
    elif isinstance(bias.target, EquitableTarget):
        target = {"kind": "equitable"}
    else:
        target = {
            "kind": "table",
            "taxes": list(bias.target.taxes),
            "allocations": [list(row) for row in bias.target.allocations],
        }
    doc = {"lambda": bias.lam, "target": target}
    if bias.psi.kind != "none":
        doc["psi"] = {
            "kind": bias.psi.kind,
            "amplitude": bias.psi.amplitude,
            "decay_scale": bias.psi.decay_scale,
        }
    return doc


# =============================================================================
# Characteristic triplets
# =============================================================================


def parse_sigma(doc: dict, mu_default: float = 2.0, where: str = "sigma") -> tuple[CharacteristicTriplet, BudgetInstance]:
    """A triplet document carries b0/mu/mean_type plus the curve catalog; an
    instance document works too (mean of its types, b0 from its budget)."""
    if "mean_type" in doc:
        mean = type_from_dict(_require(doc, "mean_type", where), f"{where}: mean_type")
        b0 = _number(doc, "b0", where)
        mu = _number(doc, "mu", where) if "mu" in doc else mu_default
        curves_doc = _require(doc, "gain_curves", where)
        gain_curves = tuple(
            gain_curve_from_dict(c, f"{where}: gain_curves[{j}]")
            for j, c in enumerate(curves_doc)
        )
        money = money_curve_from_dict(_require(doc, "money_curve", where), f"{where}: money_curve")
        convention = doc.get("mrs_convention", "n_free")
        try:
            sigma = CharacteristicTriplet(b0=b0, mu=mu, mean_type=mean)
            template = BudgetInstance(
                m=mean.m,
                n=2,
                external_budget=2 * b0,
                gain_curves=gain_curves,
                money_curve=money,
                semantics="per_capita",
                mrs_convention=convention,
            )
        except UsvcgError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        return sigma, template

    instance, _ = parse_instance(doc, where)
    if instance.types is None:
        raise SchemaError(f"{where}: instance document needs types to derive a triplet")
    from .model import mean_type as _mean

    mean = _mean(instance.types)
    mu = doc.get("mu", mu_default)
    try:
        sigma = CharacteristicTriplet(
            b0=instance.external_budget / instance.n, mu=float(mu), mean_type=mean
        )
    except UsvcgError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return sigma, instance


def load_sigma(path, mu_default: float = 2.0) -> tuple[CharacteristicTriplet, BudgetInstance]:
    return parse_sigma(load_json(path), mu_default, where=str(path))


# =============================================================================
# Answers and outcomes
# =============================================================================


def parse_ballots(doc: dict, where: str = "ballots") -> list[Ballot]:
    rows = _require(doc, "ballots", where)
    if not isinstance(rows, list):
        raise SchemaError(f"{where}: ballots must be a list")
    out = []
    for i, row in enumerate(rows):
        alloc = _require(row, "allocation", f"{where}: ballots[{i}]")
        tax = _number(row, "tax", f"{where}: ballots[{i}]")
        try:
            out.append(Ballot.from_raw(alloc, tax))
        except UsvcgError as exc:
            raise SchemaError(f"{where}: ballots[{i}]: {exc}") from exc
    return out


def parse_answers(doc: dict, where: str = "answers") -> dict[tuple[int, int], float]:
    rows = _require(doc, "answers", where)
    if not isinstance(rows, list):
        raise SchemaError(f"{where}: answers must be a list")
    out: dict[tuple[int, int], float] = {}
    for i, row in enumerate(rows):
        agent = int(_number(row, "agent", f"{where}: answers[{i}]"))
        good = int(_number(row, "good", f"{where}: answers[{i}]"))
        out[(agent, good)] = _number(row, "tau", f"{where}: answers[{i}]")
    return out


def outcome_to_dict(outcome: Outcome) -> dict:
    return {
        "decision": decision_to_dict(outcome.decision),
        "raw_vcg": list(outcome.raw_vcg),
        "payments": list(outcome.payments),
        "welfare": outcome.welfare,
    }


def outcome_from_dict(doc: dict, where: str = "outcome") -> Outcome:
    return Outcome(
        decision=decision_from_dict(_require(doc, "decision", where), f"{where}: decision"),
        raw_vcg=tuple(float(x) for x in _require(doc, "raw_vcg", where)),
        payments=tuple(float(x) for x in _require(doc, "payments", where)),
        welfare=_number(doc, "welfare", where),
    )
