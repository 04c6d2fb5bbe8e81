// Breadth-first space-time search on a fixed 0.25 m planning grid with
// {north, south, east, west, wait} actions at the agent's declared speed.
// The footprint is reduced to its circumradius; obstacle and constraint
// tests are inflated so that any point sampled along an edge at any time
// inside a constraint window is provably clear.

import { ConstraintBox, GridMap, TimedPoint } from './types';

export const PLAN_CELL = 0.25;
const MAX_EXPANSIONS = 400_000;
const SAFETY_MARGIN = 0.02;

export interface Query {
  start: [number, number, number];
  goal: [number, number, number];
  goalTolerance: number;
  speed: number;
  radius: number;
  constraints: ConstraintBox[];
  deadlineMs: number; // absolute, Date.now() clock
}

export interface SearchResult {
  status: 'success' | 'failure' | 'timeout';
  path?: TimedPoint[];
  cost?: number;
}

function pointToCellDist(x: number, y: number, cx0: number, cy0: number, res: number): number {
  const dx = Math.max(cx0 - x, 0, x - (cx0 + res));
  const dy = Math.max(cy0 - y, 0, y - (cy0 + res));
  return Math.hypot(dx, dy);
}

export function staticBlocked(map: GridMap, x: number, y: number, r: number): boolean {
  if (x - r < 0 || y - r < 0 || x + r > map.width_m || y + r > map.height_m) {
    return true;
  }
  const res = map.resolution_m;
  const cols = Math.round(map.width_m / res);
  const rows = Math.round(map.height_m / res);
  const ix0 = Math.max(0, Math.floor((x - r) / res));
  const ix1 = Math.min(cols - 1, Math.floor((x + r) / res));
  const iy0 = Math.max(0, Math.floor((y - r) / res));
  const iy1 = Math.min(rows - 1, Math.floor((y + r) / res));
  for (let iy = iy0; iy <= iy1; iy++) {
    for (let ix = ix0; ix <= ix1; ix++) {
      if (!map.cells[iy * cols + ix]) continue;
      if (pointToCellDist(x, y, ix * res, iy * res, res) <= r) return true;
    }
  }
  return false;
}

function pointToSquareDist(x: number, y: number, c: ConstraintBox): number {
  const h = c.side / 2;
  const dx = Math.max(Math.abs(x - c.cx) - h, 0);
  const dy = Math.max(Math.abs(y - c.cy) - h, 0);
  return Math.hypot(dx, dy);
}

/** Conservative per-node test: blocks the node whenever any point within
 * half an edge of it, at a time within half a step of it, could touch the
 * square. Sufficient for every sample on the node's incident edges. */
function nodeBlocked(q: Query, x: number, y: number, t: number, stepDur: number): boolean {
  const reach = q.radius + (q.speed * stepDur) / 2 + SAFETY_MARGIN;
  const slack = stepDur / 2;
  for (const c of q.constraints) {
    if (t < c.t_start - slack || t > c.t_end + slack) continue;
    if (pointToSquareDist(x, y, c) <= reach) return true;
  }
  return false;
}

function restBlocked(q: Query, x: number, y: number, t: number): boolean {
  for (const c of q.constraints) {
    if (c.t_end < t) continue;
    if (pointToSquareDist(x, y, c) <= q.radius + SAFETY_MARGIN) return true;
  }
  return false;
}

/** Exact audit of an emitted path at 0.05 s, the promise the protocol makes:
 * no emitted success may violate a constraint or the map. */
export function selfCheck(map: GridMap, q: Query, path: TimedPoint[]): boolean {
  const makespan = path[path.length - 1][0];
  const sample = (t: number): [number, number] => {
    if (t >= makespan) return [path[path.length - 1][1], path[path.length - 1][2]];
    let i = 0;
    while (i + 1 < path.length && path[i + 1][0] <= t) i++;
    const a = path[i];
    const b = path[Math.min(i + 1, path.length - 1)];
    const span = b[0] - a[0];
    const u = span > 0 ? (t - a[0]) / span : 0;
    return [a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2])];
  };
  const horizon = Math.max(makespan, ...q.constraints.map((c) => c.t_end));
  for (let t = 0; t <= horizon + 1e-9; t += 0.05) {
    const [x, y] = sample(t);
    if (staticBlocked(map, x, y, q.radius)) return false;
    for (const c of q.constraints) {
      if (t < c.t_start || t > c.t_end) continue;
      if (pointToSquareDist(x, y, c) <= q.radius) return false;
    }
  }
  return true;
}

export function planQuery(map: GridMap, q: Query): SearchResult {
  const stepDur = PLAN_CELL / q.speed;
  const [sx, sy, sth] = q.start;
  const [gx, gy] = q.goal;
  if (staticBlocked(map, sx, sy, q.radius)) return { status: 'failure' };

  const maxConstraintEnd = q.constraints.reduce((m, c) => Math.max(m, c.t_end), 0);
  const crossSteps = Math.ceil((map.width_m + map.height_m) / PLAN_CELL);
  const kMax = Math.ceil(maxConstraintEnd / stepDur) + 3 * crossSteps;

  type Node = { ix: number; iy: number; k: number; parent: Node | null };
  const startNode: Node = { ix: 0, iy: 0, k: 0, parent: null };
  const seen = new Set<string>(['0,0,0']);
  let frontier: Node[] = [startNode];
  let expansions = 0;
  const moves = [
    [1, 0],
    [-1, 0],
    [0, 1],
    [0, -1],
    [0, 0],
  ];

  const posOf = (n: Node): [number, number] => [sx + n.ix * PLAN_CELL, sy + n.iy * PLAN_CELL];

  while (frontier.length > 0) {
    const next: Node[] = [];
    for (const node of frontier) {
      expansions++;
      if (expansions % 1024 === 0 && Date.now() > q.deadlineMs) {
        return { status: 'timeout' };
      }
      if (expansions > MAX_EXPANSIONS) return { status: 'failure' };
      const [x, y] = posOf(node);
      const t = node.k * stepDur;
      if (
        Math.hypot(x - gx, y - gy) <= q.goalTolerance + 1e-9 &&
        !restBlocked(q, x, y, t)
      ) {
        return emit(map, q, node, posOf, stepDur, sth);
      }
      if (node.k >= kMax) continue;
      for (const [dx, dy] of moves) {
        const child: Node = { ix: node.ix + dx, iy: node.iy + dy, k: node.k + 1, parent: node };
        const key = `${child.ix},${child.iy},${child.k}`;
        if (seen.has(key)) continue;
        const [cx, cy] = posOf(child);
        const ct = child.k * stepDur;
        if (staticBlocked(map, cx, cy, q.radius)) continue;
        if (nodeBlocked(q, cx, cy, ct, stepDur)) continue;
        seen.add(key);
        next.push(child);
      }
    }
    frontier = next;
  }
  return { status: 'failure' };
}

function emit(
  map: GridMap,
  q: Query,
  goal: { ix: number; iy: number; k: number; parent: any },
  posOf: (n: any) => [number, number],
  stepDur: number,
  theta: number,
): SearchResult {
  const chain = [];
  for (let n: any = goal; n !== null; n = n.parent) chain.push(n);
  chain.reverse();
  const path: TimedPoint[] = chain.map((n) => {
    const [x, y] = posOf(n);
    return [n.k * stepDur, x, y, theta];
  });
  if (!selfCheck(map, q, path)) return { status: 'failure' };
  return { status: 'success', path, cost: path[path.length - 1][0] };
}
