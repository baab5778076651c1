// Spawn the real design service for integration tests.

import { type ChildProcess, spawn } from "node:child_process";

export interface ServiceHandle {
  base: string;
  stop: () => void;
}

export async function startService(): Promise<ServiceHandle> {
  const port = 8900 + Math.floor(Math.random() * 500);
  const proc: ChildProcess = spawn(
    "python3",
    ["-m", "relaynet.cli", "serve", "--host", "127.0.0.1", "--port", String(port)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (d) => (stderr += d.toString()));
  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 60_000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited early (${proc.exitCode}): ${stderr}`);
    }
    try {
      const resp = await fetch(`${base}/sessions/none/metrics`);
      if (resp.status === 404) break; // responding
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error(`service did not come up: ${stderr}`);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  return { base, stop: () => proc.kill() };
}
