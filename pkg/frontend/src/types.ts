// Wire message and payload shapes, protocol_version 1.

export interface GridMap {
  name?: string;
  width_m: number;
  height_m: number;
  resolution_m: number;
  cells: number[];
}

export interface FootprintJson {
  shape: 'circle' | 'rectangle' | 'triangle';
  radius?: number;
  length?: number;
  width?: number;
  base?: number;
  height?: number;
}

export interface AgentJson {
  agent_id: string;
  footprint: FootprintJson;
  dynamics: { model: string; speed: number };
  task: {
    kind: string;
    start: [number, number, number];
    goal?: [number, number, number];
    goal_tolerance?: number;
  };
}

export interface ConstraintBox {
  cx: number;
  cy: number;
  side: number;
  t_start: number;
  t_end: number;
}

export interface InitMessage {
  type: 'init';
  protocol_version: number;
  map: GridMap;
  map_crc32: number;
  agent: AgentJson;
}

export interface PlanMessage {
  type: 'plan';
  request_id: number;
  deadline_s: number;
  constraints: ConstraintBox[];
}

export type TimedPoint = [number, number, number, number]; // t, x, y, theta

export interface PlanResultMessage {
  type: 'plan_result';
  request_id: number;
  status: 'success' | 'failure' | 'timeout';
  path?: TimedPoint[];
  cost?: number;
}

/** The smallest disc covering the footprint; all planning is done on it. */
export function circumradius(fp: FootprintJson): number {
  if (fp.shape === 'circle') return fp.radius ?? 0;
  if (fp.shape === 'rectangle') {
    return Math.hypot((fp.length ?? 0) / 2, (fp.width ?? 0) / 2);
  }
  // isosceles triangle, centroid at the origin, apex along +x
  const b = fp.base ?? 0;
  const h = fp.height ?? 0;
  return Math.max((2 * h) / 3, Math.hypot(b / 2, h / 3));
}

/** JSON with recursively sorted keys: one byte encoding per message. */
export function canonical(obj: unknown): string {
  if (obj === null || typeof obj !== 'object') return JSON.stringify(obj);
  if (Array.isArray(obj)) return '[' + obj.map(canonical).join(',') + ']';
  const rec = obj as Record<string, unknown>;
  const keys = Object.keys(rec).sort();
  const parts = keys.map((k) => JSON.stringify(k) + ':' + canonical(rec[k]));
  return '{' + parts.join(',') + '}';
}
