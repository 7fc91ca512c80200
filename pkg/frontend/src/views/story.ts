/** Story composer: selected persona + challenge feed one POST /stories per
 * click; the response renders as character sketch, narrative, and the
 * emphasized concluding insight, with an export button for the brief. */

import type { ClusterCard, StoryResponse } from "../api.js";
import { el } from "../dom.js";

export interface ComposerState {
  personas: ClusterCard[];
  challenges: ClusterCard[];
  selectedPersona: string | null;
  selectedChallenge: string | null;
  brand: string;
  story: StoryResponse | null;
  error: string | null;
  busy: boolean;
}

function cardName(cards: ClusterCard[], clusterId: string | null): string {
  if (clusterId === null) {
    return "(none)";
  }
  const card = cards.find((c) => c.cluster_id === clusterId);
  return card ? `${card.name} (${clusterId})` : clusterId;
}

export function renderStoryComposer(
  state: ComposerState,
  onGenerate: (brand: string) => void,
  onExport: (story: StoryResponse) => void,
): HTMLElement {
  const section = el("section", { class: "panel", "data-view": "story" });
  section.append(el("h2", {}, ["Story composer"]));
  section.append(
    el("p", { class: "pair" }, [
      "persona: ",
      el("strong", { "data-role": "selected-persona" }, [cardName(state.personas, state.selectedPersona)]),
      " | challenge: ",
      el("strong", { "data-role": "selected-challenge" }, [cardName(state.challenges, state.selectedChallenge)]),
    ]),
  );

  const brandInput = el("input", {
    type: "text",
    value: state.brand,
    placeholder: "brand",
    "data-role": "brand-input",
  });
  const generate = el("button", { "data-role": "generate-story" }, ["Generate story"]);
  const ready = state.selectedPersona !== null && state.selectedChallenge !== null && !state.busy;
  if (!ready) {
    generate.setAttribute("disabled", "disabled");
  }
  generate.addEventListener("click", () => onGenerate(brandInput.value));
  section.append(el("div", { class: "controls" }, [brandInput, generate]));

  if (state.error !== null) {
    section.append(el("p", { class: "inline-error", "data-role": "story-error" }, [state.error]));
  }

  if (state.story) {
    const story = state.story;
    const character = story.character;
    section.append(
      el("div", { class: "character-sketch", "data-role": "character" }, [
        el("h3", {}, [character.name]),
        el("p", { class: "role" }, [character.role]),
        el("p", { class: "background" }, [character.background]),
        el("p", { class: "traits" }, [character.traits.join(", ")]),
      ]),
    );
    const narrative = el("div", { class: "narrative", "data-role": "narrative" });
    for (const paragraph of story.narrative.split("\n\n")) {
      narrative.append(el("p", {}, [paragraph]));
    }
    section.append(narrative);
    section.append(
      el("blockquote", { class: "insight", "data-role": "insight" }, [
        el("strong", {}, [story.concluding_insight]),
      ]),
    );
    const exportButton = el("button", { "data-role": "export-brief" }, ["Export brief"]);
    exportButton.addEventListener("click", () => onExport(story));
    section.append(exportButton);
  }
  return section;
}
