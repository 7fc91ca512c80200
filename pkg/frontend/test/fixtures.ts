/** A fixture-serving stand-in for the analytics API: scripted cluster
 * cards, one opportunity matrix with a known max-gap cell, and a story
 * endpoint whose status can be flipped to exercise error paths. */

import type { ClusterCard, OpportunityCell } from "../src/api.js";

export function card(
  clusterId: string,
  name: string,
  memberCount: number,
  shares: Record<string, number>,
): ClusterCard {
  const perBrand: ClusterCard["per_brand"] = {};
  for (const [brand, share] of Object.entries(shares)) {
    perBrand[brand] = { count: Math.round(memberCount * share), share };
  }
  return {
    cluster_id: clusterId,
    name,
    description: `Scripted description for ${name}.`,
    member_count: memberCount,
    per_brand: perBrand,
    exemplar_ids: [],
  };
}

export const PERSONAS: ClusterCard[] = [
  card("audience-0", "Efficiency Enthusiasts", 206, { gojek: 0.3, grab: 0.7 }),
  card("audience-1", "Financial Empowerment Champions", 144, { gojek: 0.5, grab: 0.5 }),
  card("audience-2", "Efficiency Innovators", 707, { gojek: 0.6, grab: 0.4 }),
];

export const CHALLENGES: ClusterCard[] = [
  card("insight-0", "Inefficient Corporate Expense and Transportation Management", 672, {
    gojek: 0.55,
    grab: 0.45,
  }),
  card("insight-1", "Improving Business Operations and Employee Satisfaction", 94, {
    gojek: 0.5,
    grab: 0.5,
  }),
  card("insight-2", "Streamlining Work Transport Processes", 336, { gojek: 0.2, grab: 0.8 }),
];

function cell(persona: ClusterCard, challenge: ClusterCard): OpportunityCell {
  const own = (persona.per_brand["gojek"].share + challenge.per_brand["gojek"].share) / 2;
  const competitor = (persona.per_brand["grab"].share + challenge.per_brand["grab"].share) / 2;
  return {
    persona_id: persona.cluster_id,
    challenge_id: challenge.cluster_id,
    own_share: own,
    competitor_share: competitor,
    gap: competitor - own,
    volume: persona.member_count + challenge.member_count,
  };
}

export const CELLS: OpportunityCell[] = PERSONAS.flatMap((p) => CHALLENGES.map((c) => cell(p, c)));

// max gap: persona 1 (0.7 grab) with challenge 3 (0.8 grab)
export const MAX_GAP_CELL = CELLS.reduce((a, b) => (b.gap > a.gap ? b : a));

export const STORY = {
  character: {
    name: "Samuel Tan",
    role: "a business owner in Singapore",
    background: "Samuel runs a growing firm and prioritizes efficiency above all.",
    traits: ["driven", "efficiency-minded"],
    persona_id: "audience-0",
  },
  challenge_id: "insight-2",
  brand: "gojek",
  narrative:
    "Samuel prioritized efficiency but neglected satisfaction.\n\nWith gojek, the team found both.",
  concluding_insight: "Efficiency and job satisfaction rise together.",
  run_id: "feedc0de00000000",
  brief: "# Content brief: gojek\n...",
};

export interface RecordedCall {
  method: string;
  path: string;
  body?: unknown;
}

export class FixtureServer {
  calls: RecordedCall[] = [];
  storyStatus = 200;
  storyErrorDetail = "persona 'not-a-persona' not found";
  failNextRequest = false;

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.failNextRequest) {
      this.failNextRequest = false;
      throw new TypeError("network down");
    }
    const url = new URL(input);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, path: url.pathname, body });

    const json = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "content-type": "application/json" },
      });

    if (method === "GET" && /^\/datasets\/[^/]+\/stats$/.test(url.pathname)) {
      return json({
        total: 1120,
        ads: 1120,
        organic: 0,
        per_brand: {
          gojek: { count: 849, share: 0.758 },
          grab: { count: 271, share: 0.242 },
        },
      });
    }
    if (method === "GET" && url.pathname === "/personas") {
      return json({ dataset_id: url.searchParams.get("dataset_id"), cards: PERSONAS });
    }
    if (method === "GET" && url.pathname === "/challenges") {
      return json({ dataset_id: url.searchParams.get("dataset_id"), cards: CHALLENGES });
    }
    if (method === "GET" && url.pathname === "/opportunities") {
      return json({
        dataset_id: url.searchParams.get("dataset_id"),
        own: url.searchParams.get("own"),
        competitor: url.searchParams.get("competitor"),
        cells: CELLS,
        selected: MAX_GAP_CELL,
        policy: "max_gap",
        not_underexploited: false,
        run_id: "opprun",
      });
    }
    if (method === "POST" && url.pathname === "/stories") {
      if (this.storyStatus !== 200) {
        return json({ detail: this.storyErrorDetail }, this.storyStatus);
      }
      return json(STORY);
    }
    if (method === "POST" && url.pathname === "/rank") {
      return json({
        dataset_id: (body as { dataset_id: string }).dataset_id,
        candidate_ids: ["ad-2", "ad-0", "ad-1"],
        ranker: "score_layer",
        grounded: false,
        scores: [0.9, 0.5, 0.1],
        run_ids: [],
        run_orderings: [],
        degraded: false,
        label: "score",
      });
    }
    if (method === "POST" && url.pathname === "/runs/pillars") {
      return json(
        { run_id: "run-1", stage: "pillars", dataset_id: (body as { dataset_id: string }).dataset_id, status: "pending", progress: 0, error: null },
        202,
      );
    }
    if (method === "GET" && /^\/runs\//.test(url.pathname)) {
      return json({ run_id: url.pathname.split("/")[2], stage: "pillars", dataset_id: "ds", status: "done", progress: 1, error: null });
    }
    return json({ detail: `no fixture for ${method} ${url.pathname}` }, 404);
  };

  postedStories(): RecordedCall[] {
    return this.calls.filter((c) => c.method === "POST" && c.path === "/stories");
  }
}
