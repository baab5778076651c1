// Canvas execution of a draw-op scene. Pure lookup tables, no state.

import type { DrawOp } from "./scene.js";

const STROKE: Record<string, string> = {
  "edge-modeled": "#b9c4d0",
  "edge-learnt_good": "#d03b3b",
  "edge-learnt_bad": "#d8d8d8",
  "route-0": "#2563eb",
  "route-1": "#0e9f6e",
  selected: "#f59e0b",
};

const FILL: Record<string, string> = {
  source: "#d03b3b",
  sink: "#eab308",
  "relay-potential": "#1f2937",
  "relay-deployed": "#60a5fa",
  "relay-used": "#2563eb",
};

const DASH: Record<string, number[]> = {
  "edge-modeled": [4, 4],
  "edge-learnt_bad": [2, 5],
};

export function renderScene(ctx: CanvasRenderingContext2D, ops: DrawOp[]): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (const op of ops) {
    switch (op.op) {
      case "line": {
        ctx.save();
        ctx.strokeStyle = STROKE[op.cls] ?? "#888";
        ctx.lineWidth = op.cls.startsWith("route") ? 2.5 : 1;
        ctx.setLineDash(DASH[op.cls] ?? []);
        ctx.beginPath();
        ctx.moveTo(op.x1, op.y1);
        ctx.lineTo(op.x2, op.y2);
        ctx.stroke();
        ctx.restore();
        break;
      }
      case "poly": {
        ctx.save();
        ctx.fillStyle = FILL[op.cls] ?? "#444";
        ctx.beginPath();
        op.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
        ctx.closePath();
        ctx.fill();
        ctx.restore();
        break;
      }
      case "square": {
        ctx.save();
        ctx.fillStyle = FILL[op.cls] ?? "#444";
        ctx.fillRect(op.x - op.r, op.y - op.r, 2 * op.r, 2 * op.r);
        ctx.restore();
        break;
      }
      case "ring": {
        ctx.save();
        ctx.strokeStyle = STROKE[op.cls] ?? "#f59e0b";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, 2 * Math.PI);
        ctx.stroke();
        ctx.restore();
        break;
      }
      case "label": {
        ctx.save();
        ctx.fillStyle = "#374151";
        ctx.font = "10px system-ui";
        ctx.textAlign = "center";
        ctx.fillText(op.text, op.x, op.y);
        ctx.restore();
        break;
      }
    }
  }
}
