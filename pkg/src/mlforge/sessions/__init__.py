"""Session lifecycle: create, queue, run, pause, tune, fork, reproduce, sweep."""

from mlforge.sessions.model import BestScore, Session, SessionState
from mlforge.sessions.manager import SessionManager

__all__ = ["BestScore", "Session", "SessionManager", "SessionState"]
