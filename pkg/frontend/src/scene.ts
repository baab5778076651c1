// Pure scene construction: ViewState -> ordered draw operations.
//
// The draw-op list IS the "rendered graph model": the canvas layer just
// executes it, and tests diff it structurally. Glyph conventions follow
// the usual field-design maps: sources are red stars, potential relay
// locations black squares, deployed relays blue triangles, the sink a
// yellow house.

import type { ViewState } from "./model.js";
import type { WireEdge } from "./types.js";

export type DrawOp =
  | { op: "line"; x1: number; y1: number; x2: number; y2: number; cls: string }
  | { op: "poly"; points: [number, number][]; cls: string }
  | { op: "square"; x: number; y: number; r: number; cls: string }
  | { op: "ring"; x: number; y: number; r: number; cls: string }
  | { op: "label"; x: number; y: number; text: string; cls: string };

export interface Transform {
  sx: (xm: number) => number;
  sy: (ym: number) => number;
}

export function fitTransform(
  state: ViewState,
  width: number,
  height: number,
  margin = 30,
): Transform {
  const xs = [...state.nodes.values()].map((n) => n.x_m);
  const ys = [...state.nodes.values()].map((n) => n.y_m);
  const minX = Math.min(...xs, 0);
  const maxX = Math.max(...xs, 1);
  const minY = Math.min(...ys, 0);
  const maxY = Math.max(...ys, 1);
  const scale = Math.min(
    (width - 2 * margin) / Math.max(maxX - minX, 1e-9),
    (height - 2 * margin) / Math.max(maxY - minY, 1e-9),
  );
  return {
    sx: (xm) => margin + (xm - minX) * scale,
    // meters grow upward, pixels grow downward
    sy: (ym) => height - margin - (ym - minY) * scale,
  };
}

function star(x: number, y: number, r: number): [number, number][] {
  const pts: [number, number][] = [];
  for (let i = 0; i < 10; i++) {
    const rad = i % 2 === 0 ? r : r * 0.45;
    const ang = -Math.PI / 2 + (i * Math.PI) / 5;
    pts.push([x + rad * Math.cos(ang), y + rad * Math.sin(ang)]);
  }
  return pts;
}

function triangle(x: number, y: number, r: number): [number, number][] {
  return [
    [x, y - r],
    [x + r * 0.9, y + r * 0.7],
    [x - r * 0.9, y + r * 0.7],
  ];
}

function house(x: number, y: number, r: number): [number, number][] {
  return [
    [x, y - r],
    [x + r, y - r * 0.2],
    [x + r * 0.6, y - r * 0.2],
    [x + r * 0.6, y + r],
    [x - r * 0.6, y + r],
    [x - r * 0.6, y - r * 0.2],
    [x - r, y - r * 0.2],
  ];
}

const round2 = (v: number) => Math.round(v * 100) / 100;

export function buildScene(state: ViewState, width = 800, height = 520): DrawOp[] {
  const ops: DrawOp[] = [];
  if (state.nodes.size === 0) return ops;
  const t = fitTransform(state, width, height);
  const px = (id: string) => {
    const n = state.nodes.get(id)!;
    return [round2(t.sx(n.x_m)), round2(t.sy(n.y_m))] as [number, number];
  };

  // link layers, by provenance, deterministic order
  const edges = [...state.edges.values()].sort((e1, e2) =>
    `${e1.a}|${e1.b}` < `${e2.a}|${e2.b}` ? -1 : 1,
  );
  const layerOn = (e: WireEdge) =>
    (e.provenance === "modeled" && state.toggles.modeled) ||
    (e.provenance === "learnt_good" && state.toggles.learntGood) ||
    (e.provenance === "learnt_bad" && state.toggles.learntBad);
  for (const e of edges) {
    if (!layerOn(e)) continue;
    if (!state.nodes.has(e.a) || !state.nodes.has(e.b)) continue;
    const [x1, y1] = px(e.a);
    const [x2, y2] = px(e.b);
    ops.push({ op: "line", x1, y1, x2, y2, cls: `edge-${e.provenance}` });
  }

  // routes of the current design on top of the link layers
  if (state.toggles.routes && state.design) {
    for (const src of Object.keys(state.design.routes).sort()) {
      state.design.routes[src].forEach((path, idx) => {
        for (let i = 0; i + 1 < path.length; i++) {
          const [x1, y1] = px(path[i]);
          const [x2, y2] = px(path[i + 1]);
          ops.push({ op: "line", x1, y1, x2, y2, cls: `route-${idx}` });
        }
      });
    }
  }

  // nodes, deterministic order; glyph reflects role and deployment
  const relaysUsed = new Set(state.design?.relays_used ?? []);
  for (const id of [...state.nodes.keys()].sort()) {
    const n = state.nodes.get(id)!;
    const [x, y] = px(id);
    if (n.role === "sink") {
      ops.push({ op: "poly", points: house(x, y, 9).map(([a, b]) => [round2(a), round2(b)]), cls: "sink" });
    } else if (n.role === "source") {
      ops.push({ op: "poly", points: star(x, y, 9).map(([a, b]) => [round2(a), round2(b)]), cls: "source" });
    } else if (state.deployed.has(id)) {
      const cls = relaysUsed.has(id) ? "relay-used" : "relay-deployed";
      ops.push({ op: "poly", points: triangle(x, y, 8).map(([a, b]) => [round2(a), round2(b)]), cls });
    } else {
      ops.push({ op: "square", x, y, r: 5, cls: "relay-potential" });
    }
    if (state.selectedNode === id) {
      ops.push({ op: "ring", x, y, r: 13, cls: "selected" });
    }
    ops.push({ op: "label", x, y: round2(y - 14), text: id, cls: "node-label" });
  }
  return ops;
}

export function sceneFingerprint(ops: DrawOp[]): string {
  return JSON.stringify(ops);
}
