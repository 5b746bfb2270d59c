"""Exception hierarchy shared by every control-plane module.

Each error carries a stable machine-readable ``code`` (surfaced verbatim in
gateway error bodies and on the CLI's stderr) and an HTTP status used by the
gateway when the error crosses the API boundary.
"""

from __future__ import annotations


class MlforgeError(Exception):
    code = "error"
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


def _error(name: str, code: str, status: int) -> type[MlforgeError]:
    return type(name, (MlforgeError,), {"code": code, "http_status": status})


# scheduler
DuplicateNodeConflict = _error("DuplicateNodeConflict", "duplicate_node", 409)
UnknownNode = _error("UnknownNode", "unknown_node", 404)
NotMaster = _error("NotMaster", "not_master", 503)
InvalidSpec = _error("InvalidSpec", "invalid_spec", 400)
JobRejected = _error("JobRejected", "unsatisfiable", 400)
UnknownJob = _error("UnknownJob", "unknown_job", 404)
NoCandidates = _error("NoCandidates", "no_candidates", 409)


class CorruptLog(MlforgeError):
    code = "corrupt_log"
    http_status = 500

    def __init__(self, seq: int, message: str = ""):
        super().__init__(message or f"event log corrupt at seq {seq}")
        self.seq = seq


# blobstore
StorageFull = _error("StorageFull", "storage_full", 507)
BlobNotFound = _error("BlobNotFound", "not_found", 404)
UnknownDataset = _error("UnknownDataset", "unknown_dataset", 404)
EmptyDataset = _error("EmptyDataset", "empty_dataset", 400)
DuplicatePath = _error("DuplicatePath", "duplicate_path", 400)
NonMonotonicStep = _error("NonMonotonicStep", "non_monotonic_step", 409)
NoCheckpoint = _error("NoCheckpoint", "no_checkpoint", 404)

# node agent
BuildFailed = _error("BuildFailed", "build_failed", 500)
MissingCodeBundle = _error("MissingCodeBundle", "missing_code_bundle", 404)
ResourceLost = _error("ResourceLost", "resource_lost", 409)
UnknownRun = _error("UnknownRun", "unknown_run", 404)
IllegalTransition = _error("IllegalTransition", "illegal_transition", 409)

# sessions
UnknownSession = _error("UnknownSession", "unknown_session", 404)
IllegalState = _error("IllegalState", "illegal_state", 409)
UnknownHyperparam = _error("UnknownHyperparam", "unknown_hyperparam", 400)
EmptyCode = _error("EmptyCode", "empty_code", 400)
EmptySweep = _error("EmptySweep", "empty_sweep", 400)

# metrics
DuplicatePoint = _error("DuplicatePoint", "duplicate_point", 409)
OutOfOrderPoint = _error("OutOfOrderPoint", "out_of_order_point", 409)

# leaderboard
NoBoardConfig = _error("NoBoardConfig", "no_board_config", 400)
ConfigLocked = _error("ConfigLocked", "config_locked", 409)

# cli
EmptyDirectory = _error("EmptyDirectory", "empty_directory", 400)

# gateway
InvalidBody = _error("InvalidBody", "invalid_body", 400)
MasterUnavailable = _error("MasterUnavailable", "master_unavailable", 503)
