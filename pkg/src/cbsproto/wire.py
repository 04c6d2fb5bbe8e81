"""Subprocess planner protocol: newline-delimited JSON over child stdio.

The coordinator spawns an external planner, sends one `init` describing the
map and agent, and then issues stateless `plan` requests carrying the full
constraint set and a deadline. Every remote success is revalidated locally
before being accepted; children that crash, emit garbage, or stay silent
past the deadline plus a one-second grace are killed and reported as
failures, never as hangs.
"""
from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
import time as _time
import zlib

from .planner_api import FAILURE, SUCCESS, TIMEOUT, PlanResult, validate_result
from .world import SpaceTimeVolume, TimedPath, TimedState

log = logging.getLogger("cbsproto.wire")

PROTOCOL_VERSION = 1
INIT_TIMEOUT_S = 10.0
GRACE_S = 1.0
SHUTDOWN_WAIT_S = 2.0


class WireError(RuntimeError):
    pass


def map_crc32(grid) -> int:
    """CRC32 over the occupancy cells as a byte array, row-major."""
    return zlib.crc32(bytes(grid.cells)) & 0xFFFFFFFF


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def init_message(agent, grid) -> dict:
    return {
        "type": "init",
        "protocol_version": PROTOCOL_VERSION,
        "map": grid.to_json_dict(),
        "map_crc32": map_crc32(grid),
        "agent": agent.to_json_dict(),
    }


def plan_message(request_id, constraints, deadline_s) -> dict:
    return {
        "type": "plan",
        "request_id": request_id,
        "deadline_s": deadline_s,
        "constraints": [
            {
                "cx": c.cx, "cy": c.cy, "side": c.side,
                "t_start": c.t_start, "t_end": c.t_end,
            }
            for c in constraints
        ],
    }


class ExternalPlannerHandle:
    """plan() adapter backed by one child process; one request in flight."""

    def __init__(self, agent, grid, params):
        command = params.get("command")
        if not command:
            raise WireError("external planner config needs a 'command' argv list")
        self.agent = agent
        self.grid = grid
        self.record_transcript = bool(params.get("record_transcript", False))
        self.transcript = []  # ("send"|"recv", line-without-newline)
        self.planner_name = None
        self.last_stats = {}
        self._request_id = 0
        self._dead = False
        self._lock = threading.Lock()
        self._queue = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise WireError(f"failed to spawn {command!r}: {e}") from e
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._handshake(params.get("init_timeout", INIT_TIMEOUT_S))

    # -- transport ----------------------------------------------------------

    def _read_loop(self):
        try:
            for line in self._proc.stdout:
                self._queue.put(line.rstrip("\n"))
        except ValueError:
            pass
        self._queue.put(None)  # EOF marker

    def _send(self, msg: dict):
        line = canonical_dumps(msg)
        if self.record_transcript:
            self.transcript.append(("send", line))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise WireError(f"child write failed: {e}") from e

    def _recv(self, timeout):
        deadline = _time.monotonic() + timeout
        while True:
            remaining = deadline - _time.monotonic()
            if remaining <= 0:
                return "timeout", None
            try:
                line = self._queue.get(timeout=remaining)
            except queue.Empty:
                return "timeout", None
            if line is None:
                return "eof", None
            if self.record_transcript:
                self.transcript.append(("recv", line))
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                return "garbage", line
            if not isinstance(msg, dict):
                return "garbage", line
            if msg.get("type") == "error":
                log.warning("child error message: %s", msg)
                continue
            return "ok", msg

    def _kill(self):
        self._dead = True
        if self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                pass

    # -- protocol -----------------------------------------------------------

    def _handshake(self, timeout):
        try:
            self._send(init_message(self.agent, self.grid))
        except WireError:
            self._kill()
            raise
        kind, msg = self._recv(timeout)
        if kind != "ok" or msg.get("type") != "init_ack":
            self._kill()
            raise WireError(f"handshake failed: {kind} {msg!r}")
        expected = map_crc32(self.grid)
        if msg.get("map_crc32") != expected:
            self._kill()
            raise WireError(
                f"map checksum mismatch: child {msg.get('map_crc32')} != {expected}"
            )
        self.planner_name = str(msg.get("planner_name", "external"))

    def plan(self, constraints, deadline) -> PlanResult:
        with self._lock:
            if self._dead or self._proc.poll() is not None:
                self.last_stats = {"error": "child_dead"}
                return PlanResult.failure()
            self._request_id += 1
            rid = self._request_id
            cons = [c for c in constraints if c.agent_id == self.agent.agent_id]
            try:
                self._send(plan_message(rid, cons, deadline))
            except WireError as e:
                log.warning("agent %s: %s", self.agent.agent_id, e)
                self._kill()
                self.last_stats = {"error": "send_failed"}
                return PlanResult.failure()
            limit = _time.monotonic() + deadline + GRACE_S
            while True:
                kind, msg = self._recv(limit - _time.monotonic())
                if kind == "timeout":
                    log.warning("agent %s: child overran deadline", self.agent.agent_id)
                    self._kill()
                    self.last_stats = {"error": "deadline_overrun"}
                    return PlanResult.timeout()
                if kind in ("eof", "garbage"):
                    log.warning("agent %s: child %s: %r", self.agent.agent_id, kind, msg)
                    self._kill()
                    self.last_stats = {"error": kind}
                    return PlanResult.failure()
                if msg.get("type") != "plan_result":
                    continue  # unsolicited message, keep waiting
                if msg.get("request_id") != rid:
                    continue  # stale reply to an earlier request
                return self._accept(msg, cons)

    def _accept(self, msg, cons) -> PlanResult:
        status = msg.get("status")
        if status == TIMEOUT:
            self.last_stats = {}
            return PlanResult.timeout()
        if status != SUCCESS:
            self.last_stats = {}
            return PlanResult.failure()
        try:
            states = [
                TimedState(float(t), float(x), float(y), float(th))
                for t, x, y, th in msg["path"]
            ]
            path = TimedPath(states, float(msg["cost"]))
        except (KeyError, TypeError, ValueError) as e:
            log.warning("agent %s: malformed plan_result: %s", self.agent.agent_id, e)
            self.last_stats = {"error": "malformed_result"}
            return PlanResult.failure()
        result = PlanResult(SUCCESS, SpaceTimeVolume(path, self.agent.footprint), path.cost)
        violations = validate_result(self.agent, cons, result, self.grid)
        if violations:
            log.warning(
                "agent %s: remote success rejected by validator: %s",
                self.agent.agent_id, violations[:3],
            )
            self.last_stats = {"error": "validator_rejected", "violations": len(violations)}
            return PlanResult.failure()
        self.last_stats = {}
        return result

    def shutdown(self):
        if self._dead:
            return
        try:
            self._send({"type": "shutdown"})
            self._proc.wait(timeout=SHUTDOWN_WAIT_S)
        except (WireError, subprocess.TimeoutExpired):
            self._kill()
        self._dead = True

    def __del__(self):
        try:
            if not self._dead and self._proc.poll() is None:
                self._kill()
        except Exception:
            pass


def spawn_external(command, agent, grid, **params) -> ExternalPlannerHandle:
    return ExternalPlannerHandle(agent, grid, {"command": command, **params})
