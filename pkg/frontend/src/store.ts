/** Single view-state store; every state transition goes through update(). */

import type {
  ClusterCard,
  DatasetStats,
  OpportunityResponse,
  RankedList,
  RunDescriptor,
  StoryResponse,
} from "./api.js";

export interface ViewState {
  datasetId: string | null;
  stats: DatasetStats | null;
  personas: ClusterCard[];
  challenges: ClusterCard[];
  opportunities: OpportunityResponse | null;
  selectedPersona: string | null;
  selectedChallenge: string | null;
  ranking: RankedList | null;
  activeStory: StoryResponse | null;
  runs: RunDescriptor[];
  connectionLost: boolean;
  /** Inline error text keyed by the control that caused it, verbatim. */
  errors: Record<string, string>;
  busy: Record<string, boolean>;
}

export function initialState(): ViewState {
  return {
    datasetId: null,
    stats: null,
    personas: [],
    challenges: [],
    opportunities: null,
    selectedPersona: null,
    selectedChallenge: null,
    ranking: null,
    activeStory: null,
    runs: [],
    connectionLost: false,
    errors: {},
    busy: {},
  };
}

export type Listener = (state: ViewState) => void;

export class AppStore {
  private state: ViewState = initialState();
  private listeners: Listener[] = [];

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  update(partial: Partial<ViewState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  setError(control: string, message: string): void {
    this.update({ errors: { ...this.state.errors, [control]: message } });
  }

  clearError(control: string): void {
    const errors = { ...this.state.errors };
    delete errors[control];
    this.update({ errors });
  }

  selectCell(personaId: string, challengeId: string): void {
    this.update({ selectedPersona: personaId, selectedChallenge: challengeId });
  }

  upsertRun(run: RunDescriptor): void {
    const runs = this.state.runs.filter((r) => r.run_id !== run.run_id);
    runs.push(run);
    runs.sort((a, b) => a.run_id.localeCompare(b.run_id));
    this.update({ runs });
  }

  /** The story composer is usable only with both halves of the pair chosen. */
  composerEnabled(): boolean {
    return this.state.selectedPersona !== null && this.state.selectedChallenge !== null;
  }
}
