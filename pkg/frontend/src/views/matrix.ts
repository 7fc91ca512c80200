/** Opportunity matrix: a heat grid of gap values per persona x challenge.
 *
 * The automatic MaxGap pick is outlined, but selection is human-first: the
 * user's click always wins and only updates local state (no API call).
 */

import type { OpportunityResponse } from "../api.js";
import { el } from "../dom.js";

export function heatColor(gap: number): string {
  // negative gaps cool blue, positive gaps warm red, zero near-white
  const clamped = Math.max(-1, Math.min(1, gap));
  const intensity = Math.round(Math.abs(clamped) * 160);
  if (clamped >= 0) {
    return `rgb(255, ${215 - intensity}, ${200 - intensity})`;
  }
  return `rgb(${200 - intensity}, ${215 - intensity}, 255)`;
}

export function renderMatrix(
  opportunities: OpportunityResponse | null,
  selectedPersona: string | null,
  selectedChallenge: string | null,
  onSelect: (personaId: string, challengeId: string) => void,
): HTMLElement {
  const section = el("section", { class: "panel", "data-view": "matrix" });
  section.append(el("h2", {}, ["Opportunity matrix"]));
  if (!opportunities) {
    section.append(el("p", { class: "placeholder" }, ["Load opportunities to compare brands."]));
    return section;
  }
  const personas = [...new Set(opportunities.cells.map((c) => c.persona_id))].sort();
  const challenges = [...new Set(opportunities.cells.map((c) => c.challenge_id))].sort();
  const byPair = new Map(opportunities.cells.map((c) => [`${c.persona_id}|${c.challenge_id}`, c]));

  const table = el("table", { class: "heat-grid" });
  const head = el("tr", {}, [el("th", {}, [`${opportunities.own} vs ${opportunities.competitor}`])]);
  for (const challenge of challenges) {
    head.append(el("th", {}, [challenge]));
  }
  table.append(head);
  for (const persona of personas) {
    const row = el("tr", {}, [el("th", {}, [persona])]);
    for (const challenge of challenges) {
      const cell = byPair.get(`${persona}|${challenge}`);
      if (!cell) {
        row.append(el("td", {}, ["-"]));
        continue;
      }
      const classes = ["heat-cell"];
      if (
        cell.persona_id === opportunities.selected.persona_id &&
        cell.challenge_id === opportunities.selected.challenge_id
      ) {
        classes.push("auto-pick");
      }
      if (cell.persona_id === selectedPersona && cell.challenge_id === selectedChallenge) {
        classes.push("selected");
      }
      const td = el(
        "td",
        {
          class: classes.join(" "),
          "data-persona": cell.persona_id,
          "data-challenge": cell.challenge_id,
          title: `gap ${cell.gap.toFixed(3)}, volume ${cell.volume}`,
        },
        [cell.gap.toFixed(3)],
      );
      td.style.backgroundColor = heatColor(cell.gap);
      td.addEventListener("click", () => onSelect(cell.persona_id, cell.challenge_id));
      row.append(td);
    }
    table.append(row);
  }
  section.append(table);
  const note = opportunities.not_underexploited
    ? "Automatic pick is outlined (no positive gap found)."
    : "Automatic MaxGap pick is outlined; click any cell to choose yourself.";
  section.append(el("p", { class: "hint" }, [note]));
  return section;
}
