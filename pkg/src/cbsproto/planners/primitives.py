"""Motion primitive sets for the lattice A* planner.

A primitive is a short dynamically feasible motion expressed in the body
frame of the agent: a sequence of (dt, dx, dy, dtheta) displacement samples
spaced at most 0.1 s apart, all starting from the identity pose.
Four-connected agents use world-frame axis moves instead of body-frame ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..world import wrap_angle


@dataclass(frozen=True)
class Primitive:
    name: str
    duration: float
    samples: tuple  # ((dt, dx, dy, dtheta), ...), last sample at t=duration
    body_frame: bool = True

    @property
    def end(self):
        return self.samples[-1]


def _straight(name, length, speed, sign=1):
    duration = length / speed
    n = max(1, math.ceil(duration / 0.1 - 1e-9))
    samples = tuple(
        (duration * i / n, sign * length * i / n, 0.0, 0.0) for i in range(1, n + 1)
    )
    return Primitive(name, duration, samples)


def _arc(name, radius, angle, speed, reverse=False):
    """Constant-curvature arc; angle > 0 turns left."""
    length = radius * abs(angle)
    duration = length / speed
    n = max(1, math.ceil(duration / 0.1 - 1e-9))
    sgn = -1.0 if reverse else 1.0
    samples = []
    for i in range(1, n + 1):
        a = angle * i / n
        dx = radius * math.sin(abs(a)) * sgn
        dy = radius * (1 - math.cos(a)) * math.copysign(1.0, angle)
        dth = a * sgn
        samples.append((duration * i / n, dx, dy, dth))
    return Primitive(name, duration, tuple(samples))


def _axis_move(name, dx, dy, cell, speed):
    duration = cell / speed
    n = max(1, math.ceil(duration / 0.1 - 1e-9))
    samples = tuple(
        (duration * i / n, dx * cell * i / n, dy * cell * i / n, 0.0)
        for i in range(1, n + 1)
    )
    return Primitive(name, duration, samples, body_frame=False)


def _wait(duration):
    n = max(1, math.ceil(duration / 0.1 - 1e-9))
    samples = tuple((duration * i / n, 0.0, 0.0, 0.0) for i in range(1, n + 1))
    return Primitive("wait", duration, samples, body_frame=False)


def build_primitives(dynamics, cell: float = 0.5):
    """Primitive set for a dynamics model; `cell` is the four-connected step."""
    speed = dynamics.speed
    if dynamics.model == "four_connected":
        return (
            _axis_move("east", 1, 0, cell, speed),
            _axis_move("west", -1, 0, cell, speed),
            _axis_move("north", 0, 1, cell, speed),
            _axis_move("south", 0, -1, cell, speed),
            _wait(cell / speed),
        )
    if dynamics.model in ("dubins", "ackermann"):
        r = dynamics.turn_radius
        prims = [
            _straight("fwd", 0.5, speed),
            _arc("left15", r, math.radians(15), speed),
            _arc("right15", r, math.radians(-15), speed),
            _arc("left45", r, math.radians(45), speed),
            _arc("right45", r, math.radians(-45), speed),
        ]
        if dynamics.model == "ackermann":
            prims += [
                _straight("rev", 0.5, speed, sign=-1),
                _arc("rev_left15", r, math.radians(15), speed, reverse=True),
                _arc("rev_right15", r, math.radians(-15), speed, reverse=True),
                _arc("rev_left45", r, math.radians(45), speed, reverse=True),
                _arc("rev_right45", r, math.radians(-45), speed, reverse=True),
            ]
        return tuple(prims)
    raise ValueError(f"no primitive set for dynamics {dynamics.model!r}")


def apply_primitive(prim: Primitive, x, y, theta, t):
    """Absolute (t, x, y, theta) samples of a primitive applied at a pose."""
    if prim.body_frame:
        c, s = math.cos(theta), math.sin(theta)
        return [
            (t + dt, x + c * dx - s * dy, y + s * dx + c * dy, wrap_angle(theta + dth))
            for dt, dx, dy, dth in prim.samples
        ]
    return [
        (t + dt, x + dx, y + dy, theta) for dt, dx, dy, _ in prim.samples
    ]
