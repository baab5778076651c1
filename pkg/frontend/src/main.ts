// Browser entry: wires the event stream into the reducer, the reducer
// into the canvas, and the controls into the REST API. The view is never
// updated optimistically: every change on screen came back as an event.

import { ApiConflict, ConsoleApi } from "./api.js";
import {
  applyEvent,
  canPlaceRelay,
  canRemoveRelay,
  initialView,
  legalActions,
  type ViewState,
} from "./model.js";
import { buildScene, fitTransform } from "./scene.js";
import { renderScene } from "./render.js";
import type { StepAction } from "./types.js";

const ACTIONS: StepAction[] = ["design", "learn", "evaluate", "augment", "finalize", "repair"];

const $ = <T extends HTMLElement>(sel: string) => document.querySelector<T>(sel)!;

const api = new ConsoleApi(
  (window as any).RELAYNET_BASE ?? `${location.protocol}//${location.host}`,
);

let view: ViewState = initialView();
let abort: AbortController | null = null;

function toast(message: string): void {
  const box = $("#toasts");
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  box.appendChild(el);
  setTimeout(() => el.remove(), 5000);
}

function redraw(): void {
  const canvas = $("#map") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  renderScene(ctx, buildScene(view, canvas.width, canvas.height));

  const legal = legalActions(view);
  for (const action of ACTIONS) {
    ($(`#btn-${action}`) as HTMLButtonElement).disabled = !legal.has(action);
  }
  $("#phase").textContent = `${view.phase}${view.hMax ? ` (h_max ${view.hMax})` : ""}`;

  const panel = $("#pdel");
  panel.innerHTML = "";
  for (const src of Object.keys(view.pdelPanel).sort()) {
    const li = document.createElement("li");
    li.textContent = `${src}: ${view.pdelPanel[src].toFixed(4)}`;
    panel.appendChild(li);
  }

  const tl = $("#timeline");
  tl.innerHTML = "";
  for (const rec of view.timeline) {
    const li = document.createElement("li");
    li.className = `tl tl-${rec.action}${rec.feasible ? "" : " tl-infeasible"}`;
    const extra = [
      rec.relays_added.length ? `+${rec.relays_added.join(",")}` : "",
      rec.relays_removed.length ? `-${rec.relays_removed.join(",")}` : "",
      rec.feasible ? "" : "infeasible",
    ]
      .filter(Boolean)
      .join(" ");
    li.textContent = `#${rec.index} ${rec.action} ${extra}`.trim();
    tl.appendChild(li);
  }
  if (view.timeline.some((r) => r.action === "evaluate" && !r.feasible) && view.phase === "designing") {
    $("#infeasible-banner").style.display = view.lastEvaluateFeasible ? "none" : "block";
  } else {
    $("#infeasible-banner").style.display = "none";
  }

  const sel = $("#selection");
  if (view.selectedNode) {
    const parts = [`selected: ${view.selectedNode}`];
    if (canPlaceRelay(view, view.selectedNode)) parts.push("(click 'place relay')");
    if (canRemoveRelay(view, view.selectedNode)) parts.push("(click 'remove relay')");
    sel.textContent = parts.join(" ");
    ($("#btn-place") as HTMLButtonElement).disabled = !canPlaceRelay(view, view.selectedNode);
    ($("#btn-remove") as HTMLButtonElement).disabled = !canRemoveRelay(view, view.selectedNode);
  } else {
    sel.textContent = "no node selected";
    ($("#btn-place") as HTMLButtonElement).disabled = true;
    ($("#btn-remove") as HTMLButtonElement).disabled = true;
  }
}

async function connect(): Promise<void> {
  abort?.abort();
  abort = new AbortController();
  const scenario = ($("#scenario") as HTMLInputElement).value || "builtin:convergence";
  const preset = ($("#preset") as HTMLSelectElement).value;
  const seed = Number(($("#seed") as HTMLInputElement).value || "0");
  try {
    const sid = await api.createSession(scenario, { preset, seed, n_packets: 300 });
    view = initialView(sid);
    redraw();
    void api.subscribeWithReconnect(
      sid,
      (ev) => {
        // reconnects restart at the snapshot, which resets the view
        if (ev.kind === "snapshot") view = initialView(sid);
        view = applyEvent(view, ev);
        redraw();
      },
      { signal: abort.signal },
    );
  } catch (err) {
    toast(err instanceof ApiConflict ? err.message : String(err));
  }
}

function guard<T>(fn: () => Promise<T>): void {
  fn().catch((err) => toast(err instanceof ApiConflict ? err.message : String(err)));
}

window.addEventListener("DOMContentLoaded", () => {
  $("#connect").addEventListener("click", () => void connect());
  for (const action of ACTIONS) {
    $(`#btn-${action}`).addEventListener("click", () =>
      guard(() => api.step(view.sessionId!, action)),
    );
  }
  $("#btn-place").addEventListener("click", () =>
    guard(() => api.changeRelays(view.sessionId!, [view.selectedNode!], [])),
  );
  $("#btn-remove").addEventListener("click", () =>
    guard(() => api.changeRelays(view.sessionId!, [], [view.selectedNode!])),
  );
  for (const layer of ["modeled", "learntGood", "learntBad", "routes"] as const) {
    $(`#layer-${layer}`).addEventListener("change", (e) => {
      view = { ...view, toggles: { ...view.toggles, [layer]: (e.target as HTMLInputElement).checked } };
      redraw();
    });
  }
  ($("#map") as HTMLCanvasElement).addEventListener("click", (e) => {
    const canvas = e.currentTarget as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * canvas.width;
    const y = ((e.clientY - rect.top) / rect.height) * canvas.height;
    const t = fitTransform(view, canvas.width, canvas.height);
    let best: string | null = null;
    let bestDist = 14;
    for (const [id, n] of view.nodes) {
      const d = Math.hypot(t.sx(n.x_m) - x, t.sy(n.y_m) - y);
      if (d < bestDist) {
        best = id;
        bestDist = d;
      }
    }
    view = { ...view, selectedNode: best };
    redraw();
  });
  redraw();
});
