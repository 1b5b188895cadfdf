import { describe, expect, it } from "vitest";
import { isTerminal, pollJob } from "../src/poll.js";
import type { JobStatus } from "../src/types.js";

function status(state: JobStatus["state"], progress = 0): JobStatus {
  return {
    job_id: "j", state, progress,
    enqueued_at: "t0", started_at: null, ended_at: null, failure_reason: null,
  };
}

describe("job polling", () => {
  it("terminates on every terminal state", async () => {
    for (const terminal of ["SUCCEEDED", "FAILED", "TIMED_OUT"] as const) {
      const sequence = [status("QUEUED"), status("RUNNING", 0.4), status(terminal, 1)];
      let i = 0;
      const seen: string[] = [];
      const outcome = await pollJob(async () => sequence[Math.min(i++, 2)], {
        sleep: () => Promise.resolve(),
        onUpdate: (s) => seen.push(s.state),
      });
      expect(outcome.state).toBe(terminal);
      expect(seen).toEqual(["QUEUED", "RUNNING", terminal]);
      expect(i).toBe(3); // no polls after the terminal state
    }
  });

  it("classifies states", () => {
    expect(isTerminal("SUCCEEDED")).toBe(true);
    expect(isTerminal("FAILED")).toBe(true);
    expect(isTerminal("TIMED_OUT")).toBe(true);
    expect(isTerminal("QUEUED")).toBe(false);
    expect(isTerminal("RUNNING")).toBe(false);
  });

  it("fails loudly when the poll budget runs out", async () => {
    await expect(
      pollJob(async () => status("RUNNING"), { sleep: () => Promise.resolve(), maxPolls: 5 }),
    ).rejects.toThrow(/budget/);
  });
});
