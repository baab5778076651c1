// The secondary acceptance criterion: a recorded event stream of a full
// design session (initial -> learn -> augment -> learn -> finalize)
// reproduces the live session's final rendered graph model exactly.

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleApi } from "../src/api.js";
import { applyEvent, initialView, replay, type ViewState } from "../src/model.js";
import { buildScene, sceneFingerprint } from "../src/scene.js";
import type { ServerEvent } from "../src/types.js";
import { startService, type ServiceHandle } from "./service.js";

let service: ServiceHandle;

beforeAll(async () => {
  service = await startService();
});

afterAll(() => {
  service?.stop();
});

describe("console replay", () => {
  it("recorded stream reproduces the live rendered model", async () => {
    const api = new ConsoleApi(service.base);
    // office preset seed 0 on the dense grid needs one augmentation round
    const sid = await api.createSession("builtin:convergence", {
      preset: "office",
      seed: 0,
      n_packets: 300,
    });

    // live side: incremental reduction driven by the SSE subscription
    const recorded: ServerEvent[] = [];
    let live: ViewState = initialView(sid);
    const abort = new AbortController();
    const streamDone = api
      .subscribe(
        sid,
        (ev) => {
          recorded.push(ev);
          live = applyEvent(live, ev);
        },
        { signal: abort.signal },
      )
      .catch(() => undefined);

    const actions: string[] = [];
    const drive = async (action: any) => {
      const resp = await api.step(sid, action);
      actions.push(`${action}:${resp.feasible}`);
      return resp;
    };

    await drive("design");
    let resp;
    for (let i = 0; i < 8; i++) {
      await drive("learn");
      resp = await drive("evaluate");
      if (resp.feasible) break;
      resp = await drive("augment");
      expect(resp.feasible).toBe(true);
    }
    expect(resp?.feasible).toBe(true);
    await drive("finalize");

    // the full flow must include an augmentation round
    const timelineActions = () => live.timeline.map((r) => r.action);
    const expectedSteps = 1 + actions.length; // snapshot + one event per step
    const deadline = Date.now() + 30_000;
    while (recorded.length < expectedSteps && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 100));
    }
    abort.abort();
    await streamDone;

    expect(recorded.length).toBe(expectedSteps);
    expect(timelineActions()).toContain("augment");
    expect(timelineActions()).toContain("finalize");
    expect(timelineActions().slice(0, 2)).toEqual(["initial", "learn"]);

    // replay the recorded stream through a fresh reducer
    const replayed = replay(recorded, sid);
    expect(sceneFingerprint(buildScene(replayed))).toBe(
      sceneFingerprint(buildScene(live)),
    );
    expect(replayed.timeline).toEqual(live.timeline);
    expect([...replayed.deployed].sort()).toEqual([...live.deployed].sort());
    expect(replayed.design).toEqual(live.design);
    expect(live.phase).toBe("operating");

    // the polling fallback carries the identical stream
    const polled = await api.pollEvents(sid, 0);
    expect(polled.length).toBe(recorded.length);
    const repolled = replay(polled as ServerEvent[], sid);
    expect(sceneFingerprint(buildScene(repolled))).toBe(
      sceneFingerprint(buildScene(live)),
    );
  });

  it("reconnect replays from the snapshot and converges to the same view", async () => {
    const api = new ConsoleApi(service.base);
    const sid = await api.createSession("builtin:line5", {
      preset: "indoor",
      seed: 1,
      n_packets: 200,
    });
    await api.step(sid, "design");
    await api.step(sid, "learn");
    // first connection: consume some events, then drop mid-session
    let partial: ViewState = initialView(sid);
    const abort1 = new AbortController();
    await api
      .subscribe(sid, (ev) => (partial = applyEvent(partial, ev)), {
        limit: 2,
        signal: abort1.signal,
      })
      .catch(() => undefined);
    await api.step(sid, "evaluate");
    // reconnect from seq 0: the snapshot resets the view, steps re-apply
    let reconnected = partial;
    await api.subscribe(
      sid,
      (ev) => {
        if (ev.kind === "snapshot") reconnected = initialView(sid);
        reconnected = applyEvent(reconnected, ev);
      },
      { limit: 4 },
    );
    const events = await api.pollEvents(sid, 0);
    const reference = replay(events as ServerEvent[], sid);
    expect(sceneFingerprint(buildScene(reconnected))).toBe(
      sceneFingerprint(buildScene(reference)),
    );
  });
});
