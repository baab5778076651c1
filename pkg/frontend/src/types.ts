// Wire types for the relaynet design service (REST + event stream).

export type Role = "source" | "potential_relay" | "sink";
export type Provenance = "modeled" | "learnt_good" | "learnt_bad";
export type Phase = "designing" | "operating" | "repairing";
export type StepAction =
  | "design"
  | "learn"
  | "evaluate"
  | "augment"
  | "finalize"
  | "repair";

export interface WireNode {
  id: string;
  x_m: number;
  y_m: number;
  role: Role;
  deployed?: boolean;
}

export interface WireEdge {
  a: string;
  b: string;
  provenance: Provenance;
  p_out_hat: number | null;
}

export interface WireGraph {
  nodes: WireNode[];
  edges: WireEdge[];
}

export interface WireDesign {
  relays_used: string[];
  h_max: number;
  routes: Record<string, string[][]>;
  predicted_pdel: Record<string, number[]>;
}

export interface IterationRecord {
  index: number;
  action: string;
  relays_added: string[];
  relays_removed: string[];
  feasible: boolean;
  per_source_pdel_predicted: Record<string, number>;
}

export interface SnapshotEvent {
  seq: number;
  kind: "snapshot";
  phase: Phase;
  h_max: number | null;
  graph: WireGraph | null;
  deployed: string[];
  design: WireDesign | null;
  scenario: { name: string; nodes: WireNode[] };
}

export interface StepEvent {
  seq: number;
  kind: "step";
  record: IterationRecord | null;
  delta: {
    phase: Phase;
    h_max: number | null;
    deployed: string[];
    edges: WireEdge[];
    design: WireDesign | null;
  };
  feasible?: boolean;
}

export type ServerEvent = SnapshotEvent | StepEvent;
