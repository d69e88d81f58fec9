/** Annotation session state: per-candidate labels, an undo stack, and an
 * ordered queue of edits awaiting sync. Rendering never blocks on the
 * network; edits apply locally first and flush preserves edit order, so the
 * server replaying the queue reaches the same state. */

import { LabelPoint, ServiceClient } from './api.js';

export const UNLABELED = -1;

interface EditRecord {
  id: number;
  before: number; // UNLABELED or class id
  after: number;
}

export class AnnotationSession {
  readonly labels = new Map<number, number>(); // candidate id -> class
  activeClass = 0;
  private undoStack: EditRecord[][] = [];
  private queue: LabelPoint[] = [];
  private syncing = false;
  lastError: string | null = null;

  constructor(readonly candidateCount: number, readonly numClasses: number) {}

  labelOf(id: number): number {
    return this.labels.get(id) ?? UNLABELED;
  }

  get unsyncedCount(): number {
    return this.queue.length;
  }

  /** Assign a class (or UNLABELED to clear) to a set of candidates; one
   * undoable action, one queued edit batch. */
  assign(ids: number[], cls: number): void {
    if (cls !== UNLABELED && (cls < 0 || cls >= this.numClasses)) {
      throw new Error(`class ${cls} out of range [0, ${this.numClasses})`);
    }
    const action: EditRecord[] = [];
    for (const id of ids) {
      if (id < 0 || id >= this.candidateCount) {
        throw new Error(`candidate ${id} out of range [0, ${this.candidateCount})`);
      }
      const before = this.labelOf(id);
      if (before === cls) continue;
      action.push({ id, before, after: cls });
      this.applyLocal(id, cls);
      this.queue.push({ id, class: cls });
    }
    if (action.length) {
      this.undoStack.push(action);
    }
  }

  /** Revert the latest action exactly; the inverse edits join the queue so
   * the server converges to the same state. */
  undo(): boolean {
    const action = this.undoStack.pop();
    if (!action) return false;
    for (let i = action.length - 1; i >= 0; i--) {
      const { id, before } = action[i];
      this.applyLocal(id, before);
      this.queue.push({ id, class: before });
    }
    return true;
  }

  private applyLocal(id: number, cls: number): void {
    if (cls === UNLABELED) {
      this.labels.delete(id);
    } else {
      this.labels.set(id, cls);
    }
  }

  /** Drain the edit queue to the server in order. On rejection the failed
   * batch is re-applied inversely so local state matches the server again,
   * and the reason lands in lastError. */
  async flush(client: ServiceClient): Promise<void> {
    if (this.syncing) return;
    this.syncing = true;
    try {
      while (this.queue.length) {
        const batch = this.queue.splice(0, this.queue.length);
        try {
          await client.postLabels(batch);
          this.lastError = null;
        } catch (err) {
          // roll the rejected edits back locally, newest first
          for (let i = batch.length - 1; i >= 0; i--) {
            this.applyLocal(batch[i].id, UNLABELED);
          }
          const server = await client.getLabels().catch(() => null);
          if (server) {
            this.labels.clear();
            for (const p of server.points) this.labels.set(p.id, p.class);
          }
          this.undoStack.length = 0;
          this.lastError = err instanceof Error ? err.message : String(err);
          throw err;
        }
      }
    } finally {
      this.syncing = false;
    }
  }

  /** Replace local state with the server's (page reload path). */
  loadFromServer(points: LabelPoint[]): void {
    this.labels.clear();
    for (const p of points) {
      this.labels.set(p.id, p.class);
    }
    this.undoStack.length = 0;
    this.queue.length = 0;
  }

  async commit(client: ServiceClient): Promise<{ path: string; count: number }> {
    await this.flush(client);
    const out = await client.commit();
    return { path: out.path, count: out.count };
  }
}
