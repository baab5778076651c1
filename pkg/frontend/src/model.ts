// View-state: a pure projection of the server's event stream.
//
// The reducer is the only way design state enters the view; UI code never
// mutates nodes/edges/design directly, so replaying a recorded stream
// reconstructs exactly what the live session showed.

import type {
  IterationRecord,
  Phase,
  ServerEvent,
  StepAction,
  WireDesign,
  WireEdge,
  WireNode,
} from "./types.js";

export interface LayerToggles {
  modeled: boolean;
  learntGood: boolean;
  learntBad: boolean;
  routes: boolean;
}

export interface ViewState {
  sessionId: string | null;
  phase: Phase;
  hMax: number | null;
  nodes: Map<string, WireNode>;
  deployed: Set<string>;
  edges: Map<string, WireEdge>;
  design: WireDesign | null;
  timeline: IterationRecord[];
  pdelPanel: Record<string, number>;
  lastEvaluateFeasible: boolean;
  lastEventSeq: number;
  selectedNode: string | null;
  toggles: LayerToggles;
}

export function initialView(sessionId: string | null = null): ViewState {
  return {
    sessionId,
    phase: "designing",
    hMax: null,
    nodes: new Map(),
    deployed: new Set(),
    edges: new Map(),
    design: null,
    timeline: [],
    pdelPanel: {},
    lastEvaluateFeasible: false,
    lastEventSeq: -1,
    selectedNode: null,
    toggles: { modeled: true, learntGood: true, learntBad: false, routes: true },
  };
}

const edgeKey = (a: string, b: string) => (a < b ? `${a}|${b}` : `${b}|${a}`);

export function applyEvent(state: ViewState, ev: ServerEvent): ViewState {
  const next: ViewState = {
    ...state,
    nodes: new Map(state.nodes),
    deployed: new Set(state.deployed),
    edges: new Map(state.edges),
    timeline: state.timeline.slice(),
    pdelPanel: { ...state.pdelPanel },
    lastEventSeq: ev.seq,
  };
  if (ev.kind === "snapshot") {
    next.nodes = new Map(ev.scenario.nodes.map((n) => [n.id, n]));
    next.edges = new Map();
    for (const e of ev.graph?.edges ?? []) next.edges.set(edgeKey(e.a, e.b), e);
    next.deployed = new Set(ev.deployed);
    next.phase = ev.phase;
    next.hMax = ev.h_max;
    next.design = ev.design;
    next.timeline = [];
    next.pdelPanel = {};
    next.lastEvaluateFeasible = false;
    return next;
  }
  const d = ev.delta;
  next.phase = d.phase;
  next.hMax = d.h_max;
  next.deployed = new Set(d.deployed);
  for (const e of d.edges) next.edges.set(edgeKey(e.a, e.b), e);
  next.design = d.design;
  if (ev.record) {
    next.timeline.push(ev.record);
    if (Object.keys(ev.record.per_source_pdel_predicted).length > 0) {
      next.pdelPanel = { ...ev.record.per_source_pdel_predicted };
    }
    if (ev.record.action === "evaluate") {
      next.lastEvaluateFeasible = ev.record.feasible;
    } else if (ev.record.action === "finalize") {
      next.lastEvaluateFeasible = false;
    }
  }
  return next;
}

export function replay(events: ServerEvent[], sessionId: string | null = null): ViewState {
  let state = initialView(sessionId);
  for (const ev of events) state = applyEvent(state, ev);
  return state;
}

// Which step buttons are legal right now (the server re-checks anyway;
// this only drives the disabled state in the UI).
export function legalActions(state: ViewState): Set<StepAction> {
  const legal = new Set<StepAction>();
  const hasLearnt = [...state.edges.values()].some((e) =>
    e.provenance.startsWith("learnt"),
  );
  if (state.phase === "designing" && state.timeline.length === 0) legal.add("design");
  if (state.phase !== "operating" && state.deployed.size >= 2 && state.timeline.length > 0) {
    legal.add("learn");
    if (hasLearnt) {
      legal.add("evaluate");
      legal.add("augment");
    }
  }
  if (state.phase === "designing" && state.lastEvaluateFeasible) legal.add("finalize");
  if (state.phase === "operating") legal.add("repair");
  return legal;
}

export function canPlaceRelay(state: ViewState, nodeId: string): boolean {
  const node = state.nodes.get(nodeId);
  return (
    node !== undefined &&
    node.role === "potential_relay" &&
    !state.deployed.has(nodeId)
  );
}

export function canRemoveRelay(state: ViewState, nodeId: string): boolean {
  const node = state.nodes.get(nodeId);
  return (
    node !== undefined &&
    node.role === "potential_relay" &&
    state.deployed.has(nodeId) &&
    !(state.design?.relays_used ?? []).includes(nodeId)
  );
}
