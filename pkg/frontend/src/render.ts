/** Plain-text formatting of console state (shared by the DOM app and tests). */

import { Snapshot, TelemetryEvent } from "./api.js";

export function formatPose(p: [number, number, number] | null): string {
  if (!p) return "—";
  const deg = ((p[2] * 180) / Math.PI).toFixed(1);
  return `(${p[0].toFixed(2)}, ${p[1].toFixed(2)}) ${deg}°`;
}

export function formatSnapshot(s: Snapshot): string {
  const lines = [
    `t=${s.t.toFixed(1)}s  mode=${s.mode}${s.estop ? "  ESTOP" : ""}`,
    `pose ${formatPose(s.truth)}  est ${formatPose(s.est)}`,
    `battery ${((100 * s.battery) / s.battery_capacity).toFixed(1)}%  ` +
      `odometer ${s.odometer.toFixed(1)} m  speed limit ${s.speed_limit.toFixed(2)}`,
    `localised=${s.localised} lost=${s.lost} inliers=${s.inliers}`,
  ];
  if (s.mission) {
    lines.push(
      `mission #${s.mission.id} ${s.mission.status}  ` +
        `route ${s.mission.route.join("→")}  ${s.mission.length.toFixed(1)} m`,
    );
  }
  if (s.teach) {
    lines.push(`teaching: ${s.teach.keyframes} keyframes over ${s.teach.arc.toFixed(1)} m`);
  }
  return lines.join("\n");
}

export function formatEvent(e: TelemetryEvent): string {
  const extra = Object.entries(e)
    .filter(([k]) => k !== "t" && k !== "kind" && k !== "type")
    .map(([k, v]) => `${k}=${JSON.stringify(v)}`)
    .join(" ");
  return `[${e.t.toFixed(1)}] ${e.kind}${extra ? " " + extra : ""}`;
}
