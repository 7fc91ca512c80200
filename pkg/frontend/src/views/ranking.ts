/** Ranked content table: ordered ids with scores, ranker provenance, and a
 * badge for grounded runs. */

import type { RankedList } from "../api.js";
import { el } from "../dom.js";

export function renderRankingTable(ranking: RankedList | null): HTMLElement {
  const section = el("section", { class: "panel", "data-view": "ranking" });
  const heading = el("h2", {}, ["Ranked content"]);
  section.append(heading);
  if (!ranking) {
    section.append(el("p", { class: "placeholder" }, ["Run a ranker to see an ordering."]));
    return section;
  }
  const provenance = el("p", { class: "provenance" }, [
    `ranker: ${ranking.label ?? ranking.ranker}`,
  ]);
  if (ranking.grounded) {
    provenance.append(" ", el("span", { class: "badge grounded" }, ["grounded"]));
  }
  if (ranking.degraded) {
    provenance.append(" ", el("span", { class: "badge degraded" }, ["degraded"]));
  }
  if (ranking.run_ids.length > 0) {
    provenance.append(" ", el("span", { class: "runs" }, [`runs: ${ranking.run_ids.join(", ")}`]));
  }
  section.append(provenance);
  const table = el("table", { class: "ranking-table" });
  table.append(
    el("tr", {}, [el("th", {}, ["#"]), el("th", {}, ["ad id"]), el("th", {}, ["score"])]),
  );
  ranking.candidate_ids.forEach((adId, index) => {
    const score = ranking.scores ? ranking.scores[index].toFixed(4) : "-";
    table.append(
      el("tr", {}, [
        el("td", {}, [String(index + 1)]),
        el("td", {}, [adId]),
        el("td", {}, [score]),
      ]),
    );
  });
  section.append(table);
  return section;
}
