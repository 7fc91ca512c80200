/** Run-status polling: 2s interval backing off to 10s, stops on terminal
 * states. The scheduler is injectable so tests can drive time by hand. */

import type { ApiClient, RunDescriptor } from "./api.js";

export type Scheduler = (fn: () => void, delayMs: number) => void;

export const BASE_DELAY_MS = 2000;
export const MAX_DELAY_MS = 10000;

export function nextDelay(current: number): number {
  return Math.min(current * 2, MAX_DELAY_MS);
}

export class RunPoller {
  constructor(
    private readonly api: ApiClient,
    private readonly onUpdate: (run: RunDescriptor) => void,
    private readonly onError: (err: unknown) => void = () => {},
    private readonly schedule: Scheduler = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  track(runId: string): void {
    const poll = (delay: number) => {
      this.api
        .getRun(runId)
        .then((run) => {
          this.onUpdate(run);
          if (run.status === "pending" || run.status === "running") {
            this.schedule(() => poll(nextDelay(delay)), delay);
          }
        })
        .catch((err) => this.onError(err));
    };
    poll(BASE_DELAY_MS);
  }
}
