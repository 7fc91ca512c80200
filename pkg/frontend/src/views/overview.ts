/** Dataset overview: totals and the brand split as share bars. */

import type { DatasetStats } from "../api.js";
import { el, formatShare } from "../dom.js";

export function renderOverview(datasetId: string | null, stats: DatasetStats | null): HTMLElement {
  const section = el("section", { class: "panel", "data-view": "overview" });
  section.append(el("h2", {}, ["Dataset overview"]));
  if (!datasetId || !stats) {
    section.append(el("p", { class: "placeholder" }, ["Load a dataset to see its stats."]));
    return section;
  }
  section.append(
    el("p", {}, [
      el("code", {}, [datasetId]),
      `: ${stats.total} items (${stats.ads} ads, ${stats.organic} organic)`,
    ]),
  );
  const list = el("ul", { class: "brand-split" });
  for (const [brand, share] of Object.entries(stats.per_brand).sort()) {
    const bar = el("div", { class: "bar" });
    bar.style.width = `${Math.round(share.share * 100)}%`;
    list.append(
      el("li", {}, [
        el("span", { class: "brand-name" }, [brand]),
        el("span", { class: "brand-count" }, [`${share.count} (${formatShare(share.share)})`]),
        el("div", { class: "bar-track" }, [bar]),
      ]),
    );
  }
  section.append(list);
  return section;
}
