"""Command-line driver.

Commands::

    usvcg solve INSTANCE (--mean | --agent-index I | --type W1,..,WM,WMONEY)
    usvcg elicit INSTANCE [--ballots PATH] [--answers PATH] [--questions PATH]
    usvcg mechanism INSTANCE [--bias PATH | --non-positive | --hetero] ...
    usvcg fuzz INSTANCE --trials N [--seed S] [--coalition K] [--csv PATH]
    usvcg converge SIGMA --n-list 10,100,1000 [--seed S] [--non-positive]
    usvcg check INSTANCE RESULT

Results are JSON documents (stdout, or --out PATH).  Exit codes: 0 ok,
2 schema/input error, 3 solver or mechanism error, 4 follow-up questions
pending (the questions are emitted as a request document), 5 a verified
property failed.  Every command with randomness takes --seed and is
deterministic given its inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import experiments, files, mechanism
from .curves import validate_assumptions
from .elicitation import answer_followup, complete_type, invert_ballot
from .errors import SchemaError, UsvcgError
from .mechanism import (
    NonPositiveConfig,
    Outcome,
    identity_residuals,
    realized_utility,
    run_bus_vcg,
    run_us_vcg,
    run_us_vcg_hetero,
)
from .model import AgentType, mean_type, valuation
from .solver import optimize

__all__ = ["main"]

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_ENGINE = 3
EXIT_PENDING = 4
EXIT_FAILED = 5


def _emit(doc: dict, out_path: str | None) -> None:
    if out_path:
        files.write_json(out_path, doc)
        print(f"wrote {out_path}")
    else:
        json.dump(doc, sys.stdout, indent=2)
        print()


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _parse_type_flag(text: str, m: int) -> AgentType:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != m + 1:
        raise SchemaError(
            f"--type needs {m} allocation weights plus a money weight, got {len(parts)} values"
        )
    values = [float(p) for p in parts]
    return AgentType(tuple(values[:-1]), values[-1])


def _profile_from_inputs(args, instance, ballots):
    """Profile from explicit types, or by inverting ballots (answers file
    feeds any follow-ups).  Returns (profile, pending-questions or None)."""
    if instance.types is not None:
        return instance.types, None
    if ballots is None:
        raise SchemaError("a profile is required: give types or ballots")
    answers = {}
    if getattr(args, "answers", None):
        answers = files.parse_answers(files.load_json(args.answers), where=args.answers)
    sessions = [invert_ballot(b, instance) for b in ballots]
    questions = []
    for i, session in enumerate(sessions):
        for fu in list(session.pending):
            if (i, fu.good_index) in answers:
                answer_followup(session, fu.good_index, answers[(i, fu.good_index)])
            else:
                questions.append(
                    {
                        "agent": i,
                        "good": fu.good_index,
                        "probe_spend": fu.probe_spend,
                        "question": (
                            f"Largest tax increase you would accept to fund a "
                            f"spending of {fu.probe_spend:.6g} on good {fu.good_index}?"
                        ),
                    }
                )
    if questions:
        return None, {"pending_followups": questions}
    return tuple(complete_type(s) for s in sessions), None


# =============================================================================
# Commands
# =============================================================================


def cmd_solve(args) -> int:
    instance, _ = files.load_instance(args.instance)
    if args.type:
        agent = _parse_type_flag(args.type, instance.m)
    elif args.agent_index is not None:
        if instance.types is None:
            raise SchemaError("--agent-index needs types in the instance file")
        agent = instance.types[args.agent_index]
    else:
        if instance.types is None:
            raise SchemaError("--mean needs types in the instance file")
        agent = mean_type(instance.types)
    decision = optimize(agent, instance)
    doc = {
        "command": "solve",
        "agent": files.type_to_dict(agent),
        "decision": files.decision_to_dict(decision),
        "valuation": valuation(agent, decision, instance),
        "validation": validate_assumptions(instance).as_dict(),
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_elicit(args) -> int:
    instance, inline_ballots = files.load_instance(args.instance)
    ballots = inline_ballots
    if args.ballots:
        ballots = files.parse_ballots(files.load_json(args.ballots), where=args.ballots)
    if ballots is None:
        raise SchemaError("no ballots: put them in the instance file or pass --ballots")
    args_ballots_profile = argparse.Namespace(ballots=None, answers=args.answers)
    profile, questions = _profile_from_inputs(args_ballots_profile, instance, ballots)
    if questions is not None:
        _emit(questions, args.questions or args.out)
        return EXIT_PENDING
    _emit({"command": "elicit", "types": [files.type_to_dict(t) for t in profile]}, args.out)
    return EXIT_OK


def _run_variant(args, instance, profile) -> tuple[Outcome, dict, list[float] | None]:
    """Dispatch to the requested mechanism variant.  Returns the outcome,
    the variant descriptor for the result document, and identity residuals
    (None when the variant has no closed accounting identity)."""
    bias = files.load_bias(args.bias) if getattr(args, "bias", None) else None
    if bias is not None:
        outcome = run_bus_vcg(profile, bias, instance)
        residuals = identity_residuals(profile, outcome, instance, bias=bias)
        return outcome, {"bias": files.bias_to_dict(bias), "non_positive": False, "hetero": False}, residuals
    if getattr(args, "hetero", False):
        outcome = run_us_vcg_hetero(profile, instance)
        residuals = identity_residuals(profile, outcome, instance, hetero=True)
        return outcome, {"bias": None, "non_positive": False, "hetero": True}, residuals
    outcome = run_us_vcg(profile, instance)
    if getattr(args, "non_positive", False):
        npc = NonPositiveConfig(
            gamma=args.gamma if args.gamma else 2.0 * (1.0 + args.mu),
            r=args.rebate,
            fd_step=args.fd_step,
        )
        rebated = mechanism.non_positive_payments(profile, instance, npc)
        outcome = Outcome(outcome.decision, outcome.raw_vcg, rebated, outcome.welfare)
        variant = {
            "bias": None,
            "non_positive": {"gamma": npc.gamma, "r": npc.r, "fd_step": npc.fd_step},
            "hetero": False,
        }
        return outcome, variant, None
    residuals = identity_residuals(profile, outcome, instance)
    return outcome, {"bias": None, "non_positive": False, "hetero": False}, residuals


def cmd_mechanism(args) -> int:
    instance, ballots = files.load_instance(args.instance)
    profile, questions = _profile_from_inputs(args, instance, ballots)
    if questions is not None:
        _emit(questions, args.out)
        return EXIT_PENDING
    if sum(bool(x) for x in (args.bias, args.non_positive, args.hetero)) > 1:
        raise SchemaError("--bias, --non-positive and --hetero are mutually exclusive")
    outcome, variant, residuals = _run_variant(args, instance, profile)
    doc = {
        "command": "mechanism",
        "variant": variant,
        **files.outcome_to_dict(outcome),
        "realized_utilities": [
            realized_utility(profile, i, outcome, instance) for i in range(len(profile))
        ],
        "identity_residuals": residuals,
        "types": [files.type_to_dict(t) for t in profile],
        "validation": validate_assumptions(instance).as_dict(),
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    instance, _ = files.load_instance(args.instance)
    if args.coalition:
        report = experiments.coalition_probe(
            instance, args.coalition, args.trials, args.seed, mu=args.mu
        )
        if args.csv:
            _write_csv(
                args.csv,
                ["trial", "manipulations", "unstable"],
                report.per_trial,
            )
    else:
        report = experiments.sdsic_fuzz(
            instance, args.trials, args.seed, mu=args.mu, misreport_space=args.misreport_space
        )
        if args.csv:
            _write_csv(
                args.csv, ["trial", "gain"], list(enumerate(report.gains))
            )
    doc = report.as_dict()
    if args.trials == 0:
        doc["warning"] = "zero trials requested; the pass is vacuous"
    _emit(doc, args.out)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_converge(args) -> int:
    sigma, template = files.load_sigma(args.sigma, mu_default=args.mu)
    n_list = [int(x) for x in args.n_list.split(",") if x.strip()]
    rule = "non_positive" if args.non_positive else "sensitive"
    table = experiments.convergence_study(
        sigma, template, n_list, args.seed, payment_rule=rule
    )
    if args.csv:
        _write_csv(
            args.csv,
            ["n", "max_abs_payment", "n_times_max", "sum_abs_payments", "max_signed_payment"],
            [
                (r.n, r.max_abs_payment, r.n_times_max, r.sum_abs_payments, r.max_signed_payment)
                for r in table.rows
            ],
        )
    _emit(table.as_dict(), args.out)
    return EXIT_OK if table.passed else EXIT_FAILED


def cmd_check(args) -> int:
    instance, _ = files.load_instance(args.instance)
    result = files.load_json(args.result)
    command = result.get("command")
    tol = 1e-6

    def close(a: float, b: float) -> bool:
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))

    if command == "solve":
        agent = files.type_from_dict(result["agent"], "result agent")
        stored = files.decision_from_dict(result["decision"], "result decision")
        fresh = optimize(agent, instance)
        ok = close(stored.tax, fresh.tax) and all(
            abs(a - b) <= tol for a, b in zip(stored.allocation, fresh.allocation)
        )
        ok = ok and close(result["valuation"], valuation(agent, fresh, instance))
    elif command == "mechanism":
        profile = tuple(
            files.type_from_dict(t, "result types") for t in result.get("types", [])
        )
        if not profile:
            raise SchemaError("result document carries no types to re-verify against")
        variant = result.get("variant", {})
        np_doc = variant.get("non_positive", False)
        ns = argparse.Namespace(
            bias=None,
            non_positive=bool(np_doc),
            hetero=variant.get("hetero", False),
            gamma=np_doc.get("gamma") if isinstance(np_doc, dict) else None,
            rebate=np_doc.get("r", 0.0) if isinstance(np_doc, dict) else 0.0,
            fd_step=np_doc.get("fd_step", 1e-5) if isinstance(np_doc, dict) else 1e-5,
            mu=2.0,
        )
        bias_doc = variant.get("bias")
        if bias_doc:
            bias = files.parse_bias(bias_doc, "result variant bias")
            fresh_outcome = run_bus_vcg(profile, bias, instance)
            residuals = identity_residuals(profile, fresh_outcome, instance, bias=bias)
        else:
            fresh_outcome, _, residuals = _run_variant(ns, instance, profile)
        stored = files.outcome_from_dict(result, "result")
        ok = close(stored.decision.tax, fresh_outcome.decision.tax)
        ok = ok and all(
            abs(a - b) <= tol
            for a, b in zip(stored.decision.allocation, fresh_outcome.decision.allocation)
        )
        ok = ok and all(close(a, b) for a, b in zip(stored.payments, fresh_outcome.payments))
        ok = ok and close(stored.welfare, fresh_outcome.welfare)
        if residuals is not None:
            ok = ok and max(abs(r) for r in residuals) <= 1e-8
    else:
        raise SchemaError(f"cannot re-verify result documents of command {command!r}")

    if ok:
        print("check: OK")
        return EXIT_OK
    print("check: MISMATCH", file=sys.stderr)
    return EXIT_FAILED


# =============================================================================
# Parser
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usvcg",
        description="Utility-sensitive VCG engine for tax-involved participatory budgeting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal budget decision for one type")
    p.add_argument("instance")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mean", action="store_true", help="solve for the mean of the instance types")
    g.add_argument("--agent-index", type=int, default=None)
    g.add_argument("--type", default=None, help="explicit type: W1,..,WM,WMONEY")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("elicit", help="recover types from preferred-budget ballots")
    p.add_argument("instance")
    p.add_argument("--ballots", default=None, help="JSON with a ballots list")
    p.add_argument("--answers", default=None, help="JSON with follow-up answers")
    p.add_argument("--questions", default=None, help="where to write pending questions")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("mechanism", help="run the mechanism and assign payments")
    p.add_argument("instance")
    p.add_argument("--bias", default=None, help="bias spec JSON path")
    p.add_argument("--non-positive", action="store_true", dest="non_positive")
    p.add_argument("--hetero", action="store_true")
    p.add_argument("--answers", default=None, help="follow-up answers when eliciting from ballots")
    p.add_argument("--gamma", type=float, default=None, help="type-spread bound for --non-positive")
    p.add_argument("--rebate", type=float, default=0.0, help="extra rebate constant r")
    p.add_argument("--fd-step", type=float, default=1e-5, dest="fd_step")
    p.add_argument("--mu", type=float, default=2.0, help="money-weight band for the default gamma")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mechanism)

    p = sub.add_parser("fuzz", help="misreport / coalition fuzzing")
    p.add_argument("instance")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--coalition", type=int, default=None, help="coalition size (omit for unilateral)")
    p.add_argument("--mu", type=float, default=4.0, help="money-weight band of sampled profiles")
    p.add_argument(
        "--misreport-space",
        choices=("full", "allocation"),
        default="full",
        dest="misreport_space",
    )
    p.add_argument("--csv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("converge", help="payment-vanishing study over growing populations")
    p.add_argument("sigma", help="triplet JSON (or per-capita instance with types)")
    p.add_argument("--n-list", required=True, dest="n_list")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--non-positive", action="store_true", dest="non_positive")
    p.add_argument("--csv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("check", help="re-verify a result document against its instance")
    p.add_argument("instance")
    p.add_argument("result")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except UsvcgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
