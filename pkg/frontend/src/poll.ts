/**
 * Job status polling. One in-flight poll per job view; the loop always
 * terminates on a terminal state (or when the poll budget runs out, which
 * surfaces as an error rather than a silent hang).
 */

import type { JobStatus } from "./types.js";
import { TERMINAL_STATES } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  maxPolls?: number;
  onUpdate?: (status: JobStatus) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export function isTerminal(state: JobStatus["state"]): boolean {
  return TERMINAL_STATES.includes(state);
}

export async function pollJob(
  fetchStatus: () => Promise<JobStatus>,
  options: PollOptions = {},
): Promise<JobStatus> {
  const intervalMs = options.intervalMs ?? 500;
  const maxPolls = options.maxPolls ?? 100_000;
  const sleep = options.sleep ?? defaultSleep;
  for (let i = 0; i < maxPolls; i += 1) {
    const status = await fetchStatus();
    options.onUpdate?.(status);
    if (isTerminal(status.state)) {
      return status;
    }
    await sleep(intervalMs);
  }
  throw new Error("poll budget exhausted before the job reached a terminal state");
}
