/** Browser entry point: wires the console to a minimal DOM UI. */

import { HttpTransport } from "./api.js";
import { OperatorConsole, WebSocketLike } from "./console.js";
import { formatEvent, formatSnapshot } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(baseUrl: string = ""): OperatorConsole {
  const ui = new OperatorConsole(new HttpTransport(baseUrl || window.location.origin));

  const wsUrl = (path: string): string =>
    (baseUrl || window.location.origin).replace(/^http/, "ws") + path;
  ui.connect((path) => new WebSocket(wsUrl(path)) as unknown as WebSocketLike);

  ui.onChange(() => {
    if (ui.snapshot) el("status").textContent = formatSnapshot(ui.snapshot);
    el("events").textContent = ui.events.slice(-25).map(formatEvent).join("\n");
    el("lease").textContent = ui.hasDriveControl
      ? `drive control: ${ui.operator}`
      : "drive control: free";
    if (ui.preview) {
      el("preview").textContent =
        `plan: ${ui.preview.route.join("→")}  ${ui.preview.length.toFixed(1)} m, ` +
        `${ui.preview.energy_estimate.toFixed(0)} J`;
    }
  });

  el("acquire").onclick = () => {
    void ui.acquireDrive((el<HTMLInputElement>("operator")).value || "operator");
  };
  el("release").onclick = () => void ui.releaseDrive();
  el("teach-start").onclick = () => void ui.teachStart();
  el("teach-stop").onclick = () =>
    void ui.teachStop(
      (el<HTMLInputElement>("teach-from")).value || undefined,
      (el<HTMLInputElement>("teach-to")).value || undefined,
    );
  el("loc-init").onclick = () =>
    void ui.initLocalisation(
      (el<HTMLInputElement>("loc-node")).value,
      parseFloat((el<HTMLInputElement>("loc-heading")).value || "0"),
    );
  el("preview-btn").onclick = () =>
    void ui.previewMission((el<HTMLInputElement>("targets")).value.split(/[,\s]+/).filter(Boolean));
  el("dispatch").onclick = () =>
    void ui.dispatchMission(
      (el<HTMLInputElement>("targets")).value.split(/[,\s]+/).filter(Boolean),
    );
  el("abort").onclick = () => void ui.abortMission();

  // teleop: keyboard arrows while the lease is held, resent at 5 Hz so the
  // server-side 0.5 s deadman keeps the robot moving only while keys are down
  const keys = new Set<string>();
  document.addEventListener("keydown", (e) => keys.add(e.key));
  document.addEventListener("keyup", (e) => keys.delete(e.key));
  setInterval(() => {
    if (!ui.hasDriveControl) return;
    const v = (keys.has("ArrowUp") ? 0.8 : 0) - (keys.has("ArrowDown") ? 0.4 : 0);
    const w = (keys.has("ArrowLeft") ? 0.8 : 0) - (keys.has("ArrowRight") ? 0.8 : 0);
    if (v !== 0 || w !== 0) void ui.teleop(v, w).catch(() => undefined);
  }, 200);

  return ui;
}
