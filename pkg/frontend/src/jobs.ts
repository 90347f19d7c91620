import type { ServiceClient } from "./api.js";
import type { JobRecord, OpPayload } from "./types.js";

export interface WatchCallbacks {
  onUpdate?: (record: JobRecord) => void;
  onDone?: (record: JobRecord) => void;
  onFailed?: (record: JobRecord) => void;
}

/** Launch a drag job and poll it to completion. `stop()` requests a
 * server-side cancel; the watcher keeps polling until the job lands in a
 * terminal state so the UI always shows the server's verdict. */
export class JobWatcher {
  private cancelled = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  jobId: string | null = null;
  last: JobRecord | null = null;

  constructor(
    private client: ServiceClient,
    private pollMs = 120,
  ) {}

  async start(
    ops: OpPayload[],
    config: Record<string, unknown>,
    callbacks: WatchCallbacks = {},
    synthetic: Record<string, unknown> = {},
  ): Promise<JobRecord> {
    const { id } = await this.client.submitJob(ops, config, synthetic);
    this.jobId = id;
    return new Promise<JobRecord>((resolve, reject) => {
      const poll = async () => {
        let record: JobRecord;
        try {
          record = await this.client.job(id);
        } catch (err) {
          reject(err);
          return;
        }
        this.last = record;
        callbacks.onUpdate?.(record);
        if (record.status === "done") {
          callbacks.onDone?.(record);
          resolve(record);
          return;
        }
        if (record.status === "failed") {
          callbacks.onFailed?.(record);
          resolve(record);
          return;
        }
        this.timer = setTimeout(poll, this.pollMs);
      };
      void poll();
    });
  }

  async stop(): Promise<void> {
    this.cancelled = true;
    if (this.jobId) {
      try {
        await this.client.cancelJob(this.jobId);
      } catch {
        // already finished: the final poll will report the terminal state
      }
    }
  }

  get wasCancelled(): boolean {
    return this.cancelled;
  }
}
