/** Dashboard wiring: one store, one API client, render-on-change.
 *
 * Interaction contract: every mutating control issues exactly one API call
 * per activation; GETs happen on explicit load actions plus run-status
 * polling. Connection loss raises a retry banner; 4xx details render inline
 * at the control that caused them, verbatim.
 */

import { ApiClient, ApiError, ConnectionError } from "./api.js";
import type { StoryResponse } from "./api.js";
import { clear, el } from "./dom.js";
import type { Scheduler } from "./poll.js";
import { RunPoller } from "./poll.js";
import { AppStore } from "./store.js";
import { renderCardList } from "./views/cards.js";
import { renderMatrix } from "./views/matrix.js";
import { renderOverview } from "./views/overview.js";
import { renderRankingTable } from "./views/ranking.js";
import { renderRunMonitor } from "./views/runs.js";
import { renderStoryComposer } from "./views/story.js";

export class DashboardApp {
  readonly store: AppStore;
  private readonly poller: RunPoller;
  private lastFailed: (() => void) | null = null;
  private competitor = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    store?: AppStore,
    scheduler?: Scheduler,
  ) {
    this.store = store ?? new AppStore();
    this.poller = new RunPoller(
      api,
      (run) => this.store.upsertRun(run),
      (err) => this.handleError("runs", err),
      scheduler,
    );
    this.store.subscribe(() => this.render());
    this.render();
  }

  private handleError(control: string, err: unknown): void {
    if (err instanceof ConnectionError) {
      this.store.update({ connectionLost: true });
      return;
    }
    if (err instanceof ApiError) {
      this.store.setError(control, err.detail);
      return;
    }
    this.store.setError(control, String(err));
  }

  private async guarded(control: string, action: () => Promise<void>): Promise<void> {
    this.store.clearError(control);
    try {
      await action();
    } catch (err) {
      if (err instanceof ConnectionError) {
        this.lastFailed = () => {
          void this.guarded(control, action);
        };
      }
      this.handleError(control, err);
    }
  }

  async loadDataset(datasetId: string, own: string, competitor: string): Promise<void> {
    this.competitor = competitor;
    this.store.update({
      datasetId,
      selectedPersona: null,
      selectedChallenge: null,
      activeStory: null,
    });
    await this.guarded("overview", async () => {
      this.store.update({ stats: await this.api.getStats(datasetId), connectionLost: false });
    });
    await this.guarded("personas", async () => {
      this.store.update({ personas: (await this.api.getPersonas(datasetId)).cards });
    });
    await this.guarded("challenges", async () => {
      this.store.update({ challenges: (await this.api.getChallenges(datasetId)).cards });
    });
    if (own && competitor) {
      await this.guarded("matrix", async () => {
        this.store.update({
          opportunities: await this.api.getOpportunities(datasetId, own, competitor),
        });
      });
    }
  }

  startPillars(datasetId: string): void {
    void this.guarded("runs", async () => {
      const run = await this.api.postPillarsRun(datasetId);
      this.store.upsertRun(run);
      if (run.status === "pending" || run.status === "running") {
        this.poller.track(run.run_id);
      }
    });
  }

  startClusters(datasetId: string, pillar: "audience" | "insight"): void {
    void this.guarded("runs", async () => {
      const run = await this.api.postClustersRun(datasetId, pillar);
      this.store.upsertRun(run);
      if (run.status === "pending" || run.status === "running") {
        this.poller.track(run.run_id);
      }
    });
  }

  runRank(ranker: "score" | "llm", grounded: boolean, brand: string): void {
    const datasetId = this.store.getState().datasetId;
    if (!datasetId) {
      return;
    }
    void this.guarded("ranking", async () => {
      this.store.update({ busy: { ...this.store.getState().busy, ranking: true } });
      try {
        const body = { dataset_id: datasetId, ranker, grounded, brand: brand || undefined };
        this.store.update({ ranking: await this.api.postRank(body) });
      } finally {
        this.store.update({ busy: { ...this.store.getState().busy, ranking: false } });
      }
    });
  }

  generateStory(brand: string): void {
    const state = this.store.getState();
    if (!state.datasetId || !this.store.composerEnabled() || state.busy["story"]) {
      return;
    }
    const request = {
      dataset_id: state.datasetId,
      persona_id: state.selectedPersona as string,
      challenge_id: state.selectedChallenge as string,
      brand,
    };
    void this.guarded("story", async () => {
      this.store.update({ busy: { ...this.store.getState().busy, story: true } });
      try {
        this.store.update({ activeStory: await this.api.postStory(request) });
      } finally {
        this.store.update({ busy: { ...this.store.getState().busy, story: false } });
      }
    });
  }

  exportBrief(story: StoryResponse): void {
    if (!story.brief) {
      return;
    }
    try {
      const blob = new Blob([story.brief], { type: "text/markdown" });
      const anchor = document.createElement("a");
      anchor.href = URL.createObjectURL(blob);
      anchor.download = `brief-${story.run_id}.md`;
      anchor.click();
      URL.revokeObjectURL(anchor.href);
    } catch {
      // jsdom and very old browsers: silently skip the download
    }
  }

  retryConnection(): void {
    this.store.update({ connectionLost: false });
    const retry = this.lastFailed;
    this.lastFailed = null;
    if (retry) {
      retry();
    }
  }

  private toolbar(): HTMLElement {
    const state = this.store.getState();
    const datasetInput = el("input", {
      type: "text",
      placeholder: "dataset id",
      value: state.datasetId ?? "",
      "data-role": "dataset-input",
    });
    const ownInput = el("input", {
      type: "text",
      placeholder: "own brand",
      value: state.opportunities?.own ?? "",
      "data-role": "own-input",
    });
    const competitorInput = el("input", {
      type: "text",
      placeholder: "competitor",
      value: state.opportunities?.competitor ?? this.competitor,
      "data-role": "competitor-input",
    });
    const load = el("button", { "data-role": "load-dataset" }, ["Load"]);
    load.addEventListener("click", () => {
      void this.loadDataset(datasetInput.value.trim(), ownInput.value.trim(), competitorInput.value.trim());
    });
    const pillars = el("button", { "data-role": "run-pillars" }, ["Run pillars"]);
    pillars.addEventListener("click", () => this.startPillars(datasetInput.value.trim()));
    const clusters = el("button", { "data-role": "run-clusters" }, ["Run clusters"]);
    clusters.addEventListener("click", () => {
      const dataset = datasetInput.value.trim();
      this.startClusters(dataset, "audience");
      this.startClusters(dataset, "insight");
    });
    return el("header", { class: "toolbar" }, [
      el("h1", {}, ["somonitor"]),
      datasetInput,
      ownInput,
      competitorInput,
      load,
      pillars,
      clusters,
    ]);
  }

  private rankControls(): HTMLElement {
    const state = this.store.getState();
    const rankerSelect = el("select", { "data-role": "ranker-select" });
    rankerSelect.append(el("option", { value: "score" }, ["score layer"]));
    rankerSelect.append(el("option", { value: "llm" }, ["llm ensemble"]));
    const grounded = el("input", { type: "checkbox", "data-role": "grounded-checkbox" });
    const brand = el("input", {
      type: "text",
      placeholder: "brand filter",
      value: state.opportunities?.own ?? "",
      "data-role": "rank-brand-input",
    });
    const button = el("button", { "data-role": "run-rank" }, ["Rank"]);
    if (state.busy["ranking"]) {
      button.setAttribute("disabled", "disabled");
    }
    button.addEventListener("click", () => {
      this.runRank(rankerSelect.value as "score" | "llm", grounded.checked, brand.value.trim());
    });
    const controls = el("div", { class: "controls" }, [
      rankerSelect,
      el("label", {}, [grounded, " grounded"]),
      brand,
      button,
    ]);
    if (state.errors["ranking"]) {
      controls.append(el("p", { class: "inline-error", "data-role": "ranking-error" }, [state.errors["ranking"]]));
    }
    return controls;
  }

  render(): void {
    const state = this.store.getState();
    clear(this.root);

    if (state.connectionLost) {
      const retry = el("button", { "data-role": "retry-connection" }, ["Retry"]);
      retry.addEventListener("click", () => this.retryConnection());
      this.root.append(
        el("div", { class: "banner", "data-role": "connection-banner" }, [
          "Connection to the analytics service lost. ",
          retry,
        ]),
      );
    }

    this.root.append(this.toolbar());

    const errorsFor = (control: string): HTMLElement | null =>
      state.errors[control]
        ? el("p", { class: "inline-error", "data-role": `${control}-error` }, [state.errors[control]])
        : null;

    const overview = renderOverview(state.datasetId, state.stats);
    const overviewError = errorsFor("overview");
    if (overviewError) {
      overview.append(overviewError);
    }
    this.root.append(overview);

    const personas = renderCardList(
      "Persona explorer",
      "personas",
      state.personas,
      state.selectedPersona,
      (id) => this.store.update({ selectedPersona: id }),
    );
    const personasError = errorsFor("personas");
    if (personasError) {
      personas.append(personasError);
    }
    this.root.append(personas);

    const challenges = renderCardList(
      "Challenge explorer",
      "challenges",
      state.challenges,
      state.selectedChallenge,
      (id) => this.store.update({ selectedChallenge: id }),
    );
    const challengesError = errorsFor("challenges");
    if (challengesError) {
      challenges.append(challengesError);
    }
    this.root.append(challenges);

    const matrix = renderMatrix(
      state.opportunities,
      state.selectedPersona,
      state.selectedChallenge,
      (personaId, challengeId) => this.store.selectCell(personaId, challengeId),
    );
    const matrixError = errorsFor("matrix");
    if (matrixError) {
      matrix.append(matrixError);
    }
    this.root.append(matrix);

    const ranking = renderRankingTable(state.ranking);
    ranking.append(this.rankControls());
    this.root.append(ranking);

    this.root.append(
      renderStoryComposer(
        {
          personas: state.personas,
          challenges: state.challenges,
          selectedPersona: state.selectedPersona,
          selectedChallenge: state.selectedChallenge,
          brand: state.opportunities?.own ?? "",
          story: state.activeStory,
          error: state.errors["story"] ?? null,
          busy: Boolean(state.busy["story"]),
        },
        (brand) => this.generateStory(brand),
        (story) => this.exportBrief(story),
      ),
    );

    const runs = renderRunMonitor(state.runs);
    const runsError = errorsFor("runs");
    if (runsError) {
      runs.append(runsError);
    }
    this.root.append(runs);
  }
}
