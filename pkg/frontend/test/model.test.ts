import { describe, expect, it } from "vitest";

import {
  applyEvent,
  canPlaceRelay,
  canRemoveRelay,
  initialView,
  legalActions,
  replay,
} from "../src/model.js";
import { buildScene, sceneFingerprint } from "../src/scene.js";
import type { ServerEvent } from "../src/types.js";

const snapshot: ServerEvent = {
  seq: 0,
  kind: "snapshot",
  phase: "designing",
  h_max: null,
  graph: {
    nodes: [],
    edges: [{ a: "r1", b: "sink", provenance: "modeled", p_out_hat: null }],
  },
  deployed: [],
  design: null,
  scenario: {
    name: "tiny",
    nodes: [
      { id: "sink", x_m: 0, y_m: 0, role: "sink" },
      { id: "r1", x_m: 6, y_m: 0, role: "potential_relay" },
      { id: "src", x_m: 12, y_m: 0, role: "source" },
    ],
  },
};

const designStep: ServerEvent = {
  seq: 1,
  kind: "step",
  record: {
    index: 0,
    action: "initial",
    relays_added: ["r1"],
    relays_removed: [],
    feasible: true,
    per_source_pdel_predicted: { src: 0.91 },
  },
  delta: {
    phase: "designing",
    h_max: 6,
    deployed: ["sink", "src", "r1"],
    edges: [{ a: "r1", b: "src", provenance: "modeled", p_out_hat: null }],
    design: {
      relays_used: ["r1"],
      h_max: 6,
      routes: { src: [["src", "r1", "sink"]] },
      predicted_pdel: { src: [0.91] },
    },
  },
};

const learnStep: ServerEvent = {
  seq: 2,
  kind: "step",
  record: {
    index: 1,
    action: "learn",
    relays_added: [],
    relays_removed: [],
    feasible: true,
    per_source_pdel_predicted: {},
  },
  delta: {
    phase: "designing",
    h_max: 6,
    deployed: ["sink", "src", "r1"],
    edges: [
      { a: "r1", b: "sink", provenance: "learnt_good", p_out_hat: 0.01 },
      { a: "r1", b: "src", provenance: "learnt_bad", p_out_hat: 0.6 },
    ],
    design: null,
  },
};

describe("event reducer", () => {
  it("snapshot resets everything", () => {
    let v = replay([snapshot, designStep]);
    expect(v.timeline).toHaveLength(1);
    v = applyEvent(v, snapshot);
    expect(v.timeline).toHaveLength(0);
    expect(v.deployed.size).toBe(0);
    expect(v.edges.size).toBe(1);
  });

  it("step deltas upsert edges and replace deployment", () => {
    const v = replay([snapshot, designStep, learnStep]);
    expect(v.edges.get("r1|sink")?.provenance).toBe("learnt_good");
    expect(v.edges.get("r1|src")?.provenance).toBe("learnt_bad");
    expect(v.deployed).toEqual(new Set(["sink", "src", "r1"]));
    expect(v.timeline.map((r) => r.action)).toEqual(["initial", "learn"]);
  });

  it("pdel panel tracks the latest non-empty prediction", () => {
    const v = replay([snapshot, designStep, learnStep]);
    expect(v.pdelPanel).toEqual({ src: 0.91 });
  });

  it("does not mutate the previous state", () => {
    const v0 = replay([snapshot]);
    const before = v0.edges.size;
    applyEvent(v0, designStep);
    expect(v0.edges.size).toBe(before);
    expect(v0.timeline).toHaveLength(0);
  });
});

describe("action gating", () => {
  it("fresh session allows only design", () => {
    const v = replay([snapshot]);
    expect(legalActions(v)).toEqual(new Set(["design"]));
  });

  it("after design, learn becomes available but evaluate needs learnt links", () => {
    const v = replay([snapshot, designStep]);
    const legal = legalActions(v);
    expect(legal.has("learn")).toBe(true);
    expect(legal.has("evaluate")).toBe(false);
    expect(legal.has("design")).toBe(false);
  });

  it("evaluate unlocks after learning", () => {
    const legal = legalActions(replay([snapshot, designStep, learnStep]));
    expect(legal.has("evaluate")).toBe(true);
    expect(legal.has("augment")).toBe(true);
    expect(legal.has("finalize")).toBe(false);
  });

  it("relay placement rules", () => {
    const v0 = replay([snapshot]);
    expect(canPlaceRelay(v0, "r1")).toBe(true);
    expect(canPlaceRelay(v0, "src")).toBe(false);
    const v1 = replay([snapshot, designStep]);
    expect(canPlaceRelay(v1, "r1")).toBe(false); // already deployed
    expect(canRemoveRelay(v1, "r1")).toBe(false); // used by the design
  });
});

describe("scene projection", () => {
  it("is deterministic for a given state", () => {
    const v = replay([snapshot, designStep, learnStep]);
    expect(sceneFingerprint(buildScene(v))).toBe(sceneFingerprint(buildScene(v)));
  });

  it("uses the glyph conventions", () => {
    const v = replay([snapshot, designStep]);
    const classes = buildScene(v).map((op) => op.cls);
    expect(classes).toContain("source");
    expect(classes).toContain("sink");
    expect(classes).toContain("relay-used");
    expect(classes.some((c) => c.startsWith("route-"))).toBe(true);
  });

  it("layer toggles filter provenance layers", () => {
    const v = replay([snapshot, designStep, learnStep]);
    const withBad = {
      ...v,
      toggles: { modeled: false, learntGood: false, learntBad: true, routes: false },
    };
    const classes = buildScene(withBad).filter((o) => o.op === "line").map((o) => o.cls);
    expect(classes).toEqual(["edge-learnt_bad"]);
  });

  it("empty session renders the bare location map", () => {
    const v = replay([snapshot]);
    const ops = buildScene(v);
    expect(ops.filter((o) => o.op === "poly" || o.op === "square")).toHaveLength(3);
    expect(ops.filter((o) => o.cls.startsWith("route"))).toHaveLength(0);
  });
});
