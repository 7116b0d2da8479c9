"""Shared fixtures: the running log/sqrt instance and random-instance helpers."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from usvcg import AgentType, BudgetInstance, GainCurve, MoneyCurve

RUNNING_PROFILE = (
    AgentType((0.7, 0.3), 0.8),
    AgentType((0.0, 1.0), 1.3),
    AgentType((0.5, 0.5), 1.0),
)

PRINTED_BALLOTS = (
    ((0.7, 0.3), 69.4),
    ((0.0, 1.0), 26.3),
    ((0.5, 0.5), 44.4),
)


def make_running_instance(convention: str = "n_scaled", semantics: str = "nominal") -> BudgetInstance:
    return BudgetInstance(
        m=2,
        n=3,
        external_budget=0.0,
        gain_curves=(GainCurve.log(10.0), GainCurve.log(10.0)),
        money_curve=MoneyCurve.power(0.5),
        semantics=semantics,
        mrs_convention=convention,
        types=RUNNING_PROFILE,
    )


@pytest.fixture
def running_instance() -> BudgetInstance:
    return make_running_instance()


@pytest.fixture
def running_instance_nfree() -> BudgetInstance:
    return make_running_instance(convention="n_free")


def random_money_curve(rng: np.random.Generator) -> MoneyCurve:
    if rng.random() < 0.5:
        return MoneyCurve.power(float(rng.uniform(0.45, 0.7)))
    return MoneyCurve.kahneman_tversky(
        float(rng.uniform(0.55, 0.95)),
        float(rng.uniform(0.55, 0.95)),
        float(rng.uniform(1.0, 2.5)),
    )


def random_gain_curve(
    rng: np.random.Generator, money: MoneyCurve, diverging_only: bool = True
) -> GainCurve:
    kinds = ["log", "power"] if diverging_only else ["log", "power", "log1p"]
    kind = kinds[int(rng.integers(len(kinds)))]
    scale = float(rng.uniform(2.0, 15.0))
    if kind == "log":
        return GainCurve.log(scale)
    if kind == "log1p":
        return GainCurve.log1p(scale)
    # keep the marginal-gain decay strictly faster than the money curve's
    # large-argument tail so the preferred tax stays finite and moderate
    tail = money.q if money.kind == "power" else min(money.q, money.r)
    return GainCurve.power(scale, float(rng.uniform(0.1, tail - 0.25)))


def random_profile(rng: np.random.Generator, n: int, m: int, mu: float = 3.0):
    types = []
    for _ in range(n):
        weights = rng.dirichlet(np.ones(m))
        money = math.exp(rng.uniform(math.log(1.0 / mu), math.log(mu)))
        types.append(AgentType.normalized(weights, money))
    return tuple(types)


def random_instance(
    rng: np.random.Generator,
    m: int,
    n: int,
    semantics: str = "nominal",
    diverging_only: bool = True,
    with_types: bool = True,
) -> BudgetInstance:
    money = random_money_curve(rng)
    # only the two-sided curve admits negative taxes, so an external budget
    # is only interesting there
    b0 = float(rng.choice([0.0, 20.0])) if money.kind == "kt" else 0.0
    return BudgetInstance(
        m=m,
        n=n,
        external_budget=b0,
        gain_curves=tuple(random_gain_curve(rng, money, diverging_only) for _ in range(m)),
        money_curve=money,
        semantics=semantics,
        types=random_profile(rng, n, m) if with_types else None,
    )


def with_convention(instance: BudgetInstance, convention: str) -> BudgetInstance:
    return dataclasses.replace(instance, mrs_convention=convention)
