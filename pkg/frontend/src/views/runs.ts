/** Run monitor: live descriptors for pillars / clusters runs being polled. */

import type { RunDescriptor } from "../api.js";
import { el } from "../dom.js";

export function renderRunMonitor(runs: RunDescriptor[]): HTMLElement {
  const section = el("section", { class: "panel", "data-view": "runs" });
  section.append(el("h2", {}, ["Run monitor"]));
  if (runs.length === 0) {
    section.append(el("p", { class: "placeholder" }, ["No runs tracked in this session."]));
    return section;
  }
  const list = el("ul", { class: "run-list" });
  for (const run of runs) {
    const bar = el("div", { class: "bar" });
    bar.style.width = `${Math.round(run.progress * 100)}%`;
    const item = el("li", { class: `run ${run.status}`, "data-run-id": run.run_id }, [
      el("span", { class: "stage" }, [run.stage]),
      el("span", { class: "status" }, [run.status]),
      el("div", { class: "bar-track" }, [bar]),
    ]);
    if (run.error) {
      item.append(el("span", { class: "inline-error" }, [run.error]));
    }
    list.append(item);
  }
  section.append(list);
  return section;
}
