/** Persona / challenge explorers: annotated cluster cards with member
 * counts and per-brand share bars; clicking a card selects it. */

import type { ClusterCard } from "../api.js";
import { el, formatShare } from "../dom.js";

export function renderCardList(
  title: string,
  view: string,
  cards: ClusterCard[],
  selectedId: string | null,
  onSelect: (clusterId: string) => void,
): HTMLElement {
  const section = el("section", { class: "panel", "data-view": view });
  section.append(el("h2", {}, [title]));
  if (cards.length === 0) {
    section.append(el("p", { class: "placeholder" }, ["No cards yet: run pillars and clusters first."]));
    return section;
  }
  const list = el("div", { class: "card-list" });
  for (const card of cards) {
    const classes = ["cluster-card"];
    if (card.cluster_id === selectedId) {
      classes.push("selected");
    }
    const node = el("article", { class: classes.join(" "), "data-cluster-id": card.cluster_id });
    node.append(
      el("h3", {}, [card.name]),
      el("p", { class: "description" }, [card.description]),
      el("p", { class: "member-count" }, [`${card.member_count} members`]),
    );
    const shares = el("ul", { class: "brand-split" });
    for (const [brand, share] of Object.entries(card.per_brand).sort()) {
      const bar = el("div", { class: "bar" });
      bar.style.width = `${Math.round(share.share * 100)}%`;
      shares.append(
        el("li", {}, [
          el("span", { class: "brand-name" }, [brand]),
          el("span", { class: "brand-count" }, [`${share.count} (${formatShare(share.share)})`]),
          el("div", { class: "bar-track" }, [bar]),
        ]),
      );
    }
    node.append(shares);
    node.addEventListener("click", () => onSelect(card.cluster_id));
    list.append(node);
  }
  section.append(list);
  return section;
}
