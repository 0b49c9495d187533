// Per-session request discipline: at most one edit in flight; later
// interactions queue behind it. Drag previews are additionally throttled to
// at most one request per interval (default 200 ms, i.e. <= 5/s) and
// coalesced so only the freshest preview is ever sent; a committed edit
// (drag drop, button press) always goes out, unthrottled.

export type Task<T> = () => Promise<T>;

export class EditQueue {
  private chain: Promise<unknown> = Promise.resolve();
  private pendingPreview: Task<unknown> | null = null;
  private lastPreviewAt = 0;
  private previewTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly previewIntervalMs = 200,
    private readonly now: () => number = () => Date.now(),
  ) {}

  /** Committed interaction: always dispatched, in order. */
  submit<T>(task: Task<T>): Promise<T> {
    this.cancelPendingPreview();
    const result = this.chain.then(task, task);
    this.chain = result.catch(() => undefined);
    return result;
  }

  /**
   * Throttled preview: coalesces with any not-yet-dispatched preview and is
   * dropped entirely if a committed edit arrives first.
   */
  preview(task: Task<unknown>): void {
    this.pendingPreview = task;
    if (this.previewTimer !== null) return;
    const elapsed = this.now() - this.lastPreviewAt;
    const wait = Math.max(this.previewIntervalMs - elapsed, 0);
    this.previewTimer = setTimeout(() => this.flushPreview(), wait);
  }

  private flushPreview(): void {
    this.previewTimer = null;
    const task = this.pendingPreview;
    this.pendingPreview = null;
    if (!task) return;
    this.lastPreviewAt = this.now();
    const result = this.chain.then(task, task);
    this.chain = result.catch(() => undefined);
  }

  private cancelPendingPreview(): void {
    this.pendingPreview = null;
    if (this.previewTimer !== null) {
      clearTimeout(this.previewTimer);
      this.previewTimer = null;
    }
  }

  /** Resolves when everything queued so far has settled. */
  async idle(): Promise<void> {
    for (;;) {
      if (this.previewTimer !== null || this.pendingPreview !== null) {
        await new Promise((r) => setTimeout(r, 10));
        continue;
      }
      const tail = this.chain;
      await tail.catch(() => undefined);
      if (tail === this.chain && this.previewTimer === null && this.pendingPreview === null) {
        return;
      }
    }
  }
}
