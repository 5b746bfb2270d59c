"""Run the gateway as a real service over a simulated cluster."""

from __future__ import annotations

import argparse
import os
from pathlib import Path

import uvicorn

from mlforge.control import ControlPlane, PlaneConfig
from mlforge.gateway.app import create_app


def build_plane(nodes: int, gpus: int, steps_per_second: float) -> ControlPlane:
    config = PlaneConfig.default_cluster(
        n_nodes=nodes,
        gpus=gpus,
        clock="system",
        driver="paced",
        step_time=1.0 / max(steps_per_second, 0.1),
    )
    return ControlPlane(config)


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="mlforge-server", description=__doc__)
    parser.add_argument(
        "--addr",
        default=os.environ.get("MLFORGE_ADDR", "127.0.0.1:8040"),
        help="listen address host:port (env MLFORGE_ADDR)",
    )
    parser.add_argument("--nodes", type=int, default=3, help="simulated node count")
    parser.add_argument("--gpus", type=int, default=8, help="GPUs per simulated node")
    parser.add_argument("--rate", type=float, default=4.0, help="trainer steps per second")
    parser.add_argument("--static", default=None, help="directory of web UI assets to serve at /ui")
    args = parser.parse_args(argv)

    host, _, port = args.addr.rpartition(":")
    plane = build_plane(args.nodes, args.gpus, args.rate)
    plane.start_paced()
    static = args.static
    if static is None:
        candidate = Path(__file__).resolve().parents[3] / "frontend" / "dist"
        static = candidate if candidate.is_dir() else None
    app = create_app(plane, static_dir=static)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8040), log_level="info")
    finally:
        plane.stop_paced()


if __name__ == "__main__":
    main()
