from __future__ import annotations

import json
import time
from pathlib import Path

import pytest
from click.testing import CliRunner
from starlette.testclient import TestClient

from mlforge.cli import main as cli_main
from mlforge.cli.packaging import collect_files, package_code
from mlforge.gateway.app import create_app

from conftest import make_plane, push_mnist


@pytest.fixture
def env(monkeypatch):
    plane = make_plane(driver="eager")
    push_mnist(plane)
    app = create_app(plane)
    monkeypatch.setattr(cli_main, "build_client", lambda endpoint: TestClient(app))
    monkeypatch.delenv("MLFORGE_ENDPOINT", raising=False)
    monkeypatch.delenv("MLFORGE_USER", raising=False)
    return plane, CliRunner()


@pytest.fixture
def code_dir(tmp_path):
    project = tmp_path / "proj"
    project.mkdir()
    (project / "main.py").write_text("train()\n")
    (project / "util.py").write_text("helper()\n")
    return project


def invoke(runner, *args, user="kim", **kwargs):
    return runner.invoke(cli_main.cli, ["--user", user, *args], **kwargs)


class TestPackaging:
    def test_equal_trees_equal_digest(self, tmp_path):
        for name in ("a", "b"):
            d = tmp_path / name
            (d / "sub").mkdir(parents=True)
            (d / "main.py").write_bytes(b"x = 1\n")
            (d / "sub" / "data.txt").write_bytes(b"hi")
        _, digest_a = package_code(tmp_path / "a")
        _, digest_b = package_code(tmp_path / "b")
        assert digest_a == digest_b

    def test_mtime_change_keeps_digest(self, code_dir):
        _, before = package_code(code_dir)
        future = time.time() + 1000
        (code_dir / "main.py").touch()
        import os

        os.utime(code_dir / "main.py", (future, future))
        _, after = package_code(code_dir)
        assert before == after

    def test_byte_edit_changes_digest(self, code_dir):
        _, before = package_code(code_dir)
        (code_dir / "main.py").write_text("train()!\n")
        _, after = package_code(code_dir)
        assert before != after

    def test_ignore_file_respected(self, code_dir):
        (code_dir / "secret.key").write_text("shh")
        (code_dir / "notes.tmp").write_text("x")
        (code_dir / ".mlforgeignore").write_text("*.key\n# comment\n*.tmp\n")
        files = collect_files(code_dir)
        assert sorted(files) == ["main.py", "util.py"]

    def test_git_dir_always_ignored(self, code_dir):
        (code_dir / ".git").mkdir()
        (code_dir / ".git" / "HEAD").write_text("ref")
        assert sorted(collect_files(code_dir)) == ["main.py", "util.py"]

    def test_empty_directory_is_usage_error(self, tmp_path, env):
        plane, runner = env
        result = invoke(runner, "run", "main.py", "-d", "mnist", "--dir", str(tmp_path))
        assert result.exit_code == 1


class TestCommands:
    def test_run_prints_session_id(self, env, code_dir):
        plane, runner = env
        result = invoke(
            runner, "run", "main.py", "-d", "mnist",
            "--hp", "lr=0.1", "--hp", "steps=10", "--dir", str(code_dir),
        )
        assert result.exit_code == 0, result.output
        assert result.stdout == "kim/mnist/1\n"

    def test_run_missing_entrypoint_is_usage_error(self, env, code_dir):
        plane, runner = env
        result = invoke(runner, "run", "missing.py", "-d", "mnist", "--dir", str(code_dir))
        assert result.exit_code == 1

    def test_logs_tail(self, env, code_dir):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=10", "--dir", str(code_dir))
        result = invoke(runner, "logs", "--tail", "1", "--name", "loss", "kim/mnist/1")
        assert result.exit_code == 0
        assert result.stdout == "10 loss 0.5\n"

    def test_logs_follow_matches_snapshot(self, env, code_dir):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=8", "--dir", str(code_dir))
        snapshot = invoke(runner, "logs", "--name", "loss", "kim/mnist/1").stdout
        followed = invoke(runner, "logs", "--follow", "--name", "loss", "kim/mnist/1").stdout
        assert followed == snapshot

    def test_session_lifecycle_commands(self, env, code_dir):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=10", "--dir", str(code_dir))
        forked = invoke(runner, "session", "fork", "kim/mnist/1", "--checkpoint", "5")
        assert forked.stdout == "kim/mnist/2\n"
        reproduced = invoke(runner, "session", "reproduce", "kim/mnist/1")
        assert reproduced.stdout == "kim/mnist/3\n"
        listing = invoke(runner, "session", "list", "--state", "DONE")
        assert "kim/mnist/3" in listing.stdout

    def test_remote_error_exit_2_with_code_on_stderr(self, env, code_dir):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=5", "--dir", str(code_dir))
        result = invoke(runner, "session", "stop", "kim/mnist/1")
        assert result.exit_code == 2
        assert "illegal_state" in result.stderr

    def test_unknown_session_exit_2(self, env):
        plane, runner = env
        result = invoke(runner, "logs", "kim/mnist/9")
        assert result.exit_code == 2
        assert "unknown_session" in result.stderr

    def test_connectivity_error_exit_3(self, monkeypatch):
        import httpx

        monkeypatch.setattr(
            cli_main, "build_client",
            lambda endpoint: httpx.Client(base_url="http://127.0.0.1:9", timeout=0.2),
        )
        runner = CliRunner()
        result = runner.invoke(cli_main.cli, ["cluster"])
        assert result.exit_code == 3

    def test_usage_error_exit_1(self, env):
        plane, runner = env
        result = invoke(runner, "run")  # missing required args
        assert result.exit_code == 1

    def test_json_output_is_gateway_body_bytes(self, env, code_dir):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=5", "--dir", str(code_dir))
        result = invoke(runner, "--output", "json", "logs", "--tail", "1", "kim/mnist/1")
        app_client = cli_main.build_client("unused")
        direct = app_client.get(
            "/v1/sessions/kim/mnist/1/logs", params={"tail": 1},
            headers={"X-MLForge-User": "kim"},
        )
        assert result.stdout_bytes == direct.content

    def test_env_vars_override_flags(self, env, code_dir, monkeypatch):
        plane, runner = env
        monkeypatch.setenv("MLFORGE_USER", "override")
        result = invoke(
            runner, "run", "main.py", "-d", "mnist", "--hp", "steps=5",
            "--dir", str(code_dir), user="flaguser",
        )
        assert result.stdout == "override/mnist/1\n"

    def test_infer_command(self, env, code_dir, tmp_path):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=10", "--dir", str(code_dir))
        sample = tmp_path / "digit.bin"
        sample.write_bytes(b"3")
        result = invoke(runner, "infer", "kim/mnist/1", "--input", str(sample))
        assert result.exit_code == 0
        assert result.stdout.startswith("label ")
        assert "confidence 0.5" in result.stdout

    def test_plot_to_file(self, env, code_dir, tmp_path):
        plane, runner = env
        invoke(runner, "run", "main.py", "-d", "mnist", "--hp", "steps=3", "--dir", str(code_dir))
        out = tmp_path / "series.csv"
        result = invoke(runner, "plot", "kim/mnist/1", "--metric", "loss", "--out", str(out))
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "step,kim/mnist/1"
        assert len(lines) == 4

    def test_dataset_push_and_board(self, env, tmp_path):
        plane, runner = env
        data = tmp_path / "newdata"
        data.mkdir()
        (data / "rows.csv").write_text("a,b\n")
        result = invoke(
            runner, "dataset", "push", "beans", str(data),
            "--board-metric", "acc", "--board-direction", "maximize",
        )
        assert result.stdout == "beans@v1\n"
        listing = invoke(runner, "dataset", "list", "--name", "beans")
        assert "beans@v1" in listing.stdout
