"""Per-dataset ranking of sessions by best reported score."""

from mlforge.leaderboard.board import Leaderboard, LeaderboardEntry

__all__ = ["Leaderboard", "LeaderboardEntry"]
