"""Node agent: resource reports, env cache, dataset mounts, simulated runs."""

from mlforge.agent.agent import EnvHandle, EnvironmentSpec, NodeAgent, Run
from mlforge.agent.trainer import SimTrainerState, infer

__all__ = ["EnvHandle", "EnvironmentSpec", "NodeAgent", "Run", "SimTrainerState", "infer"]
