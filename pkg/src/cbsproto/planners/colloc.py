"""Trajectory optimizer for car-like (ackermann) agents.

The motion planning problem is transcribed into a penalized nonlinear
program over N knot states (x, y, theta), N control pairs (v, steer) and the
total time T. Trapezoidal collocation defects, obstacle clearance, constraint
squares, control bounds and knot-to-knot speed are all soft penalties; the
program is minimized by plain gradient descent with central-difference
gradients and a backtracking line search, escalating the penalty weights x10
for up to three rounds. Warm starts reuse the previous solution; cold starts
are seeded from a lattice A* path.
"""
from __future__ import annotations

import math
import time as _time

import numpy as np
from scipy import ndimage

from .. import world
from ..planner_api import SUCCESS, PlanResult
from ..world import SpaceTimeVolume, TimedPath, TimedState, sample_state
from .astar import AStarPlanner

N_KNOTS = 40
DEFECT_TOL = 1e-3


def clearance_field(grid):
    """Meters of clearance to the nearest obstacle cell or map edge, per cell."""
    cols, rows = grid.cols, grid.rows
    occ = np.array(grid.cells, dtype=bool).reshape(rows, cols)
    padded = np.pad(~occ, 1, constant_values=False)
    outside = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    # negative depth inside obstacles keeps the penalty gradient alive there
    inside = ndimage.distance_transform_edt(np.pad(occ, 1, constant_values=True))[1:-1, 1:-1]
    return (outside - inside) * grid.resolution_m


class CollocPlanner:
    def __init__(self, agent, grid, params=None, seed=0):
        if agent.dynamics.model != "ackermann":
            raise ValueError("CollocPlanner requires ackermann dynamics")
        params = params or {}
        self.agent = agent
        self.grid = grid
        self.n = int(params.get("knots", N_KNOTS))
        self.experience = bool(params.get("experience", True))
        self.max_iters = int(params.get("max_iters", 120))
        self.w_dyn = float(params.get("w_dyn", 2e3))
        self.w_obs = float(params.get("w_obs", 2e2))
        self.w_con = float(params.get("w_con", 2e2))
        self.w_bnd = float(params.get("w_bnd", 1e2))
        self._clear = clearance_field(grid)
        self._res = grid.resolution_m
        self._warm = None
        self.last_stats = {}

    # -- objective ----------------------------------------------------------

    def _clearance_at(self, x, y):
        """Bilinear lookup into the clearance field, vectorized."""
        res = self._res
        rows, cols = self._clear.shape
        fx = np.clip(x / res - 0.5, 0.0, cols - 1.001)
        fy = np.clip(y / res - 0.5, 0.0, rows - 1.001)
        ix, iy = fx.astype(int), fy.astype(int)
        ux, uy = fx - ix, fy - iy
        c = self._clear
        return (
            c[iy, ix] * (1 - ux) * (1 - uy)
            + c[iy, ix + 1] * ux * (1 - uy)
            + c[iy + 1, ix] * (1 - ux) * uy
            + c[iy + 1, ix + 1] * ux * uy
        )

    def _objective(self, Z, ctx, scale):
        """Penalized objective for a batch of flat decision vectors Z (B, nv)."""
        n = self.n
        dyn = self.agent.dynamics
        L = dyn.wheelbase
        r_need = self.agent.footprint.circumradius + 0.02

        B = Z.shape[0]
        x = np.empty((B, n))
        y = np.empty((B, n))
        th = np.empty((B, n))
        x[:, 0], y[:, 0], th[:, 0] = ctx["start"]
        nfree = n - 1
        states = Z[:, : 3 * nfree].reshape(B, nfree, 3)
        x[:, 1:] = states[:, :, 0]
        y[:, 1:] = states[:, :, 1]
        th[:, 1:] = states[:, :, 2]
        ctrl = Z[:, 3 * nfree : 3 * nfree + 2 * n].reshape(B, n, 2)
        v, st = ctrl[:, :, 0], ctrl[:, :, 1]
        if ctx["fixed_T"] is None:
            T = np.maximum(Z[:, -1], 0.2)
        else:
            T = np.full(B, ctx["fixed_T"])
        h = T / (n - 1)

        fx = v * np.cos(th)
        fy = v * np.sin(th)
        fth = v * np.tan(np.clip(st, -1.4, 1.4)) / L
        hh = (h / 2)[:, None]
        dx = x[:, 1:] - x[:, :-1] - hh * (fx[:, 1:] + fx[:, :-1])
        dy = y[:, 1:] - y[:, :-1] - hh * (fy[:, 1:] + fy[:, :-1])
        dth = th[:, 1:] - th[:, :-1] - hh * (fth[:, 1:] + fth[:, :-1])
        J_dyn = (dx**2 + dy**2 + dth**2).sum(axis=1)

        pen_obs = np.maximum(0.0, r_need - self._clearance_at(x, y))
        J_obs = (pen_obs**2).sum(axis=1)

        J_con = np.zeros(B)
        tk = h[:, None] * np.arange(n)
        for c in ctx["cons"]:
            active = (tk >= c.t_start - 0.1) & (tk <= c.t_end + 0.1)
            # signed distance to the square: negative inside, so the penalty
            # keeps a gradient even when a knot has penetrated it
            qx = np.abs(x - c.cx) - c.side / 2
            qy = np.abs(y - c.cy) - c.side / 2
            outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
            inside = np.minimum(np.maximum(qx, qy), 0.0)
            d = outside + inside
            pen = np.maximum(0.0, r_need + 0.05 - d)
            J_con += np.where(active, pen**2, 0.0).sum(axis=1)

        # control bounds and knot-step speed envelope
        over_v = np.maximum(0.0, np.abs(v) - dyn.speed)
        over_s = np.maximum(0.0, np.abs(st) - dyn.max_steer)
        step = np.hypot(x[:, 1:] - x[:, :-1], y[:, 1:] - y[:, :-1])
        over_step = np.maximum(0.0, step - dyn.speed * h[:, None])
        J_bnd = (over_v**2).sum(axis=1) + (over_s**2).sum(axis=1) + (
            over_step**2
        ).sum(axis=1)

        J_task = np.zeros(B)
        task = self.agent.task
        if task.kind == "surveillance":
            cx, cy = task.center
            r = np.hypot(x - cx, y - cy)
            J_task = ((r - task.radius) ** 2).sum(axis=1)
            J_task += 0.1 * ((v - 0.8 * dyn.speed) ** 2).sum(axis=1)
        else:
            gx, gy = task.goal.x, task.goal.y
            J_task = 50.0 * ((x[:, -1] - gx) ** 2 + (y[:, -1] - gy) ** 2)

        J = (
            (0.0 if ctx["fixed_T"] is not None else 1.0) * T
            + scale * (self.w_dyn * J_dyn + self.w_obs * J_obs + self.w_con * J_con)
            + self.w_bnd * scale * J_bnd
            + 10.0 * J_task
        )
        return J

    def _max_defect(self, z, ctx):
        n = self.n
        dyn = self.agent.dynamics
        Z = z[None, :]
        # recompute defects only
        nfree = n - 1
        x = np.concatenate([[ctx["start"][0]], Z[0, : 3 * nfree : 3]])
        y = np.concatenate([[ctx["start"][1]], Z[0, 1 : 3 * nfree : 3]])
        th = np.concatenate([[ctx["start"][2]], Z[0, 2 : 3 * nfree : 3]])
        ctrl = Z[0, 3 * nfree : 3 * nfree + 2 * n].reshape(n, 2)
        v, st = ctrl[:, 0], ctrl[:, 1]
        T = ctx["fixed_T"] if ctx["fixed_T"] is not None else max(z[-1], 0.2)
        h = T / (n - 1)
        fx = v * np.cos(th)
        fy = v * np.sin(th)
        fth = v * np.tan(np.clip(st, -1.4, 1.4)) / dyn.wheelbase
        dx = np.abs(x[1:] - x[:-1] - h / 2 * (fx[1:] + fx[:-1]))
        dy = np.abs(y[1:] - y[:-1] - h / 2 * (fy[1:] + fy[:-1]))
        dth = np.abs(th[1:] - th[:-1] - h / 2 * (fth[1:] + fth[:-1]))
        return max(dx.max(), dy.max(), dth.max())

    # -- optimization -------------------------------------------------------

    def _descend(self, z, ctx, deadline_at):
        nv = z.size
        eps = 1e-5
        iters = 0
        for round_i in range(3):
            scale = 10.0**round_i
            step0 = 2e-3
            for _ in range(self.max_iters):
                if _time.monotonic() > deadline_at:
                    return z, iters, False
                iters += 1
                Zp = np.repeat(z[None, :], nv, axis=0)
                Zm = Zp.copy()
                idx = np.arange(nv)
                Zp[idx, idx] += eps
                Zm[idx, idx] -= eps
                grad = (self._objective(Zp, ctx, scale) - self._objective(Zm, ctx, scale)) / (
                    2 * eps
                )
                gnorm = np.linalg.norm(grad)
                if gnorm < 1e-8:
                    break
                d = -grad / gnorm
                j0 = self._objective(z[None, :], ctx, scale)[0]
                alpha = step0
                improved = False
                for _bt in range(20):
                    z_try = z + alpha * d
                    j_try = self._objective(z_try[None, :], ctx, scale)[0]
                    if j_try < j0 - 1e-12:
                        z = z_try
                        improved = True
                        step0 = min(alpha * 2.0, 5e-2)
                        break
                    alpha *= 0.5
                if not improved:
                    break
            if self._max_defect(z, ctx) < DEFECT_TOL:
                break
        return z, iters, True

    # -- seeding ------------------------------------------------------------

    def _seed_from_astar(self, constraints, deadline):
        seeder = AStarPlanner(self.agent, self.grid, {"experience": False})
        res = seeder.plan(list(constraints), min(deadline, 4.0))
        if res.status != SUCCESS:
            return None
        path = res.volume.path
        n = self.n
        T = max(path.makespan, 0.5)
        times = np.linspace(0.0, T, n)
        xs, ys, ths = [], [], []
        for t in times:
            s = sample_state(path, float(t))
            xs.append(s.x)
            ys.append(s.y)
            ths.append(s.theta)
        ths = np.unwrap(np.array(ths))
        h = T / (n - 1)
        v = np.zeros(n)
        st = np.zeros(n)
        dyn = self.agent.dynamics
        for k in range(1, n):
            step = math.hypot(xs[k] - xs[k - 1], ys[k] - ys[k - 1])
            heading = ths[k]
            fwd = (xs[k] - xs[k - 1]) * math.cos(heading) + (ys[k] - ys[k - 1]) * math.sin(heading)
            v[k] = math.copysign(step / h, fwd if abs(fwd) > 1e-9 else 1.0)
            dth = ths[k] - ths[k - 1]
            if abs(v[k]) > 1e-6:
                st[k] = math.atan(np.clip(dth / h * dyn.wheelbase / v[k], -10, 10))
        v = np.clip(v, -dyn.speed, dyn.speed)
        st = np.clip(st, -dyn.max_steer, dyn.max_steer)
        xs, ys, ths = self._integrate(v, st, T, (xs[0], ys[0], ths[0]))
        return self._pack(xs, ys, ths, v, st, T)

    def _seed_surveillance(self):
        task = self.agent.task
        start = self.agent.start
        cx, cy = task.center
        T = task.duration
        n = self.n
        dyn = self.agent.dynamics
        r = task.radius
        phi0 = math.atan2(start.y - cy, start.x - cx)
        omega = 0.8 * dyn.speed / r
        times = np.linspace(0.0, T, n)
        phi = phi0 + omega * times
        xs = cx + r * np.cos(phi)
        ys = cy + r * np.sin(phi)
        ths = phi + math.pi / 2
        xs[0], ys[0] = start.x, start.y
        v = np.full(n, 0.8 * dyn.speed)
        st = np.full(n, math.atan(dyn.wheelbase / r))
        return self._pack(xs, ys, ths, v, st, T)

    def _integrate(self, v, st, T, start):
        """States consistent with the trapezoidal scheme for given controls.
        The heading rate does not depend on heading, so the recursion is
        explicit: theta first, then x and y from the headings at both ends."""
        n = self.n
        L = self.agent.dynamics.wheelbase
        h = T / (n - 1)
        fth = v * np.tan(np.clip(st, -1.4, 1.4)) / L
        ths = start[2] + np.concatenate([[0.0], np.cumsum(h / 2 * (fth[1:] + fth[:-1]))])
        fx = v * np.cos(ths)
        fy = v * np.sin(ths)
        xs = start[0] + np.concatenate([[0.0], np.cumsum(h / 2 * (fx[1:] + fx[:-1]))])
        ys = start[1] + np.concatenate([[0.0], np.cumsum(h / 2 * (fy[1:] + fy[:-1]))])
        return xs, ys, ths

    def _project(self, z, ctx):
        """Replace states by the integration of the optimized controls, making
        the collocation defects vanish exactly."""
        n = self.n
        nfree = n - 1
        ctrl = z[3 * nfree : 3 * nfree + 2 * n].reshape(n, 2)
        T = ctx["fixed_T"] if ctx["fixed_T"] is not None else max(z[-1], 0.2)
        xs, ys, ths = self._integrate(ctrl[:, 0], ctrl[:, 1], T, ctx["start"])
        return self._pack(xs, ys, ths, ctrl[:, 0], ctrl[:, 1], T)

    def _pack(self, xs, ys, ths, v, st, T):
        states = np.stack([xs[1:], ys[1:], ths[1:]], axis=1).ravel()
        ctrl = np.stack([v, st], axis=1).ravel()
        return np.concatenate([states, ctrl, [T]])

    # -- plan ---------------------------------------------------------------

    def plan(self, constraints, deadline) -> PlanResult:
        t_limit = _time.monotonic() + deadline
        task = self.agent.task
        start = self.agent.start
        cons = [c for c in constraints if c.agent_id == self.agent.agent_id]
        fixed_T = task.duration if task.kind == "surveillance" else None
        ctx = {
            "start": (start.x, start.y, start.theta),
            "cons": cons,
            "fixed_T": fixed_T,
        }

        starts = []
        if self.experience and self._warm is not None:
            starts.append(("warm", self._warm.copy))
        if task.kind == "surveillance":
            starts.append(("cold", self._seed_surveillance))
        else:
            starts.append(("cold", lambda: self._seed_from_astar(cons, deadline)))

        from ..planner_api import validate_result

        total_iters = 0
        for label, make in starts:
            z0 = make()
            if z0 is None:
                self.last_stats = {"iterations": total_iters, "seed": "astar-failed"}
                return PlanResult.failure()
            z, iters, finished = self._descend(z0, ctx, t_limit)
            total_iters += iters
            self.last_stats = {"iterations": total_iters, "seed": label}
            if not finished:
                return PlanResult.timeout()
            # re-integrating the states from the optimized controls zeroes the
            # defects; the result only counts if it still validates
            for cand in (self._project(z, ctx), z):
                if self._max_defect(cand, ctx) >= DEFECT_TOL:
                    continue
                path = self._emit(cand, ctx)
                vol = SpaceTimeVolume(path, self.agent.footprint)
                result = PlanResult(SUCCESS, vol, path.cost)
                if validate_result(self.agent, cons, result, self.grid):
                    continue
                if self.experience:
                    self._warm = cand.copy()
                return result
        return PlanResult.failure()

    def _emit(self, z, ctx) -> TimedPath:
        n = self.n
        nfree = n - 1
        xs = np.concatenate([[ctx["start"][0]], z[: 3 * nfree : 3]])
        ys = np.concatenate([[ctx["start"][1]], z[1 : 3 * nfree : 3]])
        ths = np.concatenate([[ctx["start"][2]], z[2 : 3 * nfree : 3]])
        T = ctx["fixed_T"] if ctx["fixed_T"] is not None else max(z[-1], 0.2)
        knot_t = np.linspace(0.0, T, n)
        m = max(n, int(math.ceil(T / 0.1)) + 1)
        times = np.linspace(0.0, T, m)
        xi = np.interp(times, knot_t, xs)
        yi = np.interp(times, knot_t, ys)
        thi = np.interp(times, knot_t, ths)
        states = [
            TimedState(float(t), float(x), float(y), world.wrap_angle(float(th)))
            for t, x, y, th in zip(times, xi, yi, thi)
        ]
        return TimedPath(states, float(T))
