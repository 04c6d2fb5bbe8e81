// NDJSON request loop: init -> init_ack, plan -> plan_result, shutdown ->
// exit. Malformed lines get an error message and the loop continues; EOF is
// a clean exit. One request in flight at a time.

import { crc32 } from 'node:zlib';

import { planQuery, Query } from './search';
import {
  AgentJson,
  GridMap,
  InitMessage,
  PlanMessage,
  PlanResultMessage,
  canonical,
  circumradius,
} from './types';

export const PLANNER_NAME = 'gridstep-bfs';

export function mapCrc32(map: GridMap): number {
  return crc32(Buffer.from(map.cells)) >>> 0;
}

export class PlannerSession {
  private map: GridMap | null = null;
  private agent: AgentJson | null = null;

  constructor(private readonly send: (line: string) => void) {}

  private reply(msg: object): void {
    this.send(canonical(msg));
  }

  private error(message: string): void {
    this.reply({ type: 'error', message });
  }

  /** Returns false when the session should terminate. */
  handleLine(line: string): boolean {
    if (line.trim() === '') return true;
    let msg: any;
    try {
      msg = JSON.parse(line);
    } catch {
      this.error('not valid JSON');
      return true;
    }
    if (typeof msg !== 'object' || msg === null || typeof msg.type !== 'string') {
      this.error('message needs a type field');
      return true;
    }
    switch (msg.type) {
      case 'init':
        this.handleInit(msg as InitMessage);
        return true;
      case 'plan':
        this.handlePlan(msg as PlanMessage);
        return true;
      case 'shutdown':
        return false;
      default:
        this.error(`unknown message type ${msg.type}`);
        return true;
    }
  }

  private handleInit(msg: InitMessage): void {
    if (!msg.map || !Array.isArray(msg.map.cells) || !msg.agent) {
      this.error('malformed init');
      return;
    }
    this.map = msg.map;
    this.agent = msg.agent;
    this.reply({
      type: 'init_ack',
      protocol_version: msg.protocol_version ?? 1,
      map_crc32: mapCrc32(msg.map),
      planner_name: PLANNER_NAME,
    });
  }

  private handlePlan(msg: PlanMessage): void {
    if (this.map === null || this.agent === null) {
      this.error('plan before init');
      return;
    }
    const task = this.agent.task;
    if (task.kind !== 'start_goal' || !task.goal) {
      this.fail(msg.request_id);
      return;
    }
    const query: Query = {
      start: task.start,
      goal: task.goal,
      goalTolerance: task.goal_tolerance ?? 0.15,
      speed: this.agent.dynamics.speed,
      radius: circumradius(this.agent.footprint),
      constraints: msg.constraints ?? [],
      deadlineMs: Date.now() + msg.deadline_s * 1000,
    };
    const res = planQuery(this.map, query);
    const out: PlanResultMessage = {
      type: 'plan_result',
      request_id: msg.request_id,
      status: res.status,
    };
    if (res.status === 'success') {
      out.path = res.path;
      out.cost = res.cost;
    }
    this.reply(out);
  }

  private fail(requestId: number): void {
    this.reply({ type: 'plan_result', request_id: requestId, status: 'failure' });
  }
}
