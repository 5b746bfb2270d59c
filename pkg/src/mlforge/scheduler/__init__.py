"""Centralized resource scheduler: registry, queue, failover, event log."""

from mlforge.scheduler.election import elect_leader
from mlforge.scheduler.eventlog import Event, EventLog
from mlforge.scheduler.master import Master, recover_state
from mlforge.scheduler.policy import BestFitPolicy, FirstFitPolicy
from mlforge.scheduler.types import (
    JobSpec,
    NodeDescriptor,
    PlacementDecision,
    ResourceReport,
)

__all__ = [
    "BestFitPolicy",
    "Event",
    "EventLog",
    "FirstFitPolicy",
    "JobSpec",
    "Master",
    "NodeDescriptor",
    "PlacementDecision",
    "ResourceReport",
    "elect_leader",
    "recover_state",
]
