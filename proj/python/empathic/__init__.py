"""Python bindings for the empathic C++ core."""

import json

from ._empathic import (
    DISCOUNT,
    Belief,
    Error,
    IntegrityError,
    InvalidArgument,
    Model,
    Session,
    binomial_test,
    kendall_tau,
    plan_values,
    ranking_index,
    rankings,
    replay,
    wilcoxon_signed_rank,
)
from ._empathic import online_batch as _online_batch

OBJECTS = ("Passenger", "Roadblock", "ParkedCar")


def session(model, **config):
    """Build a Session from keyword config (same keys as the CLI's JSON)."""
    return Session(model, json.dumps(config))


def online_batch(model, sessions=10, baseline_episodes=100, **config):
    return json.loads(_online_batch(model, json.dumps(config), sessions, baseline_episodes))


__all__ = [
    "DISCOUNT",
    "OBJECTS",
    "Belief",
    "Error",
    "IntegrityError",
    "InvalidArgument",
    "Model",
    "Session",
    "binomial_test",
    "kendall_tau",
    "online_batch",
    "plan_values",
    "ranking_index",
    "rankings",
    "replay",
    "session",
    "wilcoxon_signed_rank",
]
