/* View models for the cluster review page and the campaign dashboard.
 * Pure state + invariants, no DOM and no network: the app layer renders
 * them and the test suite drives them directly. */

import type { StatusDoc, SubmitBody, TaskDoc } from "./api.js";

export interface Tile {
  itemId: string;
  thumbnail: string | null;
  toggled: boolean;
  labelDraft: string | null;
}

/** One cluster page: tiles with single-click misclustered toggling.
 *
 * Submit stays disabled until a cluster label is chosen and every toggled
 * tile carries a label draft; the submission payload always covers the
 * whole cluster regardless of which grid page is visible.
 */
export class ClusterPageModel {
  readonly taskId: string;
  readonly suggestedLabel: string | null;
  readonly revision: number;
  readonly tiles: Tile[];
  clusterLabel: string;
  pageIndex = 0;

  constructor(
    task: TaskDoc,
    revision: number,
    readonly pageSize: number = 120,
  ) {
    if (pageSize < 1) throw new Error("pageSize must be positive");
    this.taskId = task.task_id;
    this.suggestedLabel = task.suggested_label;
    this.revision = revision;
    this.clusterLabel = task.suggested_label ?? "";
    this.tiles = task.members.map((m) => ({
      itemId: m.item_id,
      thumbnail: m.thumbnail,
      toggled: false,
      labelDraft: null,
    }));
  }

  private tile(itemId: string): Tile {
    const tile = this.tiles.find((t) => t.itemId === itemId);
    if (!tile) throw new Error(`item ${itemId} is not in this cluster`);
    return tile;
  }

  toggle(itemId: string): boolean {
    const tile = this.tile(itemId);
    tile.toggled = !tile.toggled;
    if (!tile.toggled) tile.labelDraft = null;
    return tile.toggled;
  }

  setDraft(itemId: string, label: string): void {
    const tile = this.tile(itemId);
    if (!tile.toggled) {
      throw new Error(`item ${itemId} is not toggled; drafts apply to toggled tiles`);
    }
    tile.labelDraft = label.trim() || null;
  }

  setClusterLabel(label: string): void {
    this.clusterLabel = label.trim();
  }

  get toggledTiles(): Tile[] {
    return this.tiles.filter((t) => t.toggled);
  }

  get missingDrafts(): Tile[] {
    return this.toggledTiles.filter((t) => !t.labelDraft);
  }

  canSubmit(): boolean {
    return this.clusterLabel.length > 0 && this.missingDrafts.length === 0;
  }

  /** Exact submission body; throws if the submit invariant does not hold. */
  payload(): SubmitBody {
    if (!this.canSubmit()) {
      throw new Error("submit disabled: missing cluster label or tile drafts");
    }
    const misclustered = this.toggledTiles.map((t) => t.itemId);
    const itemLabels: Record<string, string> = {};
    for (const tile of this.toggledTiles) {
      itemLabels[tile.itemId] = tile.labelDraft as string;
    }
    return {
      label: this.clusterLabel,
      misclustered,
      item_labels: itemLabels,
      revision: this.revision,
    };
  }

  // -- fixed-size grid pages within the task (large clusters stay usable) --

  pageCount(): number {
    return Math.max(1, Math.ceil(this.tiles.length / this.pageSize));
  }

  visibleTiles(): Tile[] {
    const start = this.pageIndex * this.pageSize;
    return this.tiles.slice(start, start + this.pageSize);
  }

  nextPage(): void {
    this.pageIndex = Math.min(this.pageIndex + 1, this.pageCount() - 1);
  }

  prevPage(): void {
    this.pageIndex = Math.max(this.pageIndex - 1, 0);
  }
}

export interface IterationRow {
  iteration: number;
  trainSize: number;
  poolSize: number;
  accuracy: number | null;
}

/** Read-only mirror of GET /api/status, accumulating one row per round. */
export class DashboardModel {
  status: StatusDoc | null = null;
  history: IterationRow[] = [];
  labelsSeen = new Set<string>();

  update(status: StatusDoc): void {
    this.status = status;
    const accuracy = status.metrics_latest?.accuracy_top1 ?? null;
    const row: IterationRow = {
      iteration: status.iteration,
      trainSize: status.train_size,
      poolSize: status.pool_size,
      accuracy,
    };
    const last = this.history[this.history.length - 1];
    if (!last || last.iteration !== row.iteration) {
      this.history.push(row);
    } else {
      this.history[this.history.length - 1] = row;
    }
  }

  noteLabel(label: string): void {
    const trimmed = label.trim();
    if (trimmed) this.labelsSeen.add(trimmed);
  }

  get knownLabels(): string[] {
    return [...this.labelsSeen].sort();
  }

  get pendingTasks(): number {
    return this.status?.pending_tasks ?? 0;
  }

  get campaignComplete(): boolean {
    return Boolean(this.status?.complete);
  }

  canIterate(): boolean {
    return (
      this.status !== null &&
      !this.status.busy &&
      this.status.pending_tasks === 0 &&
      this.status.round_in_flight === null &&
      !this.campaignComplete
    );
  }
}
