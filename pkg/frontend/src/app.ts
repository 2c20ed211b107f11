/* DOM shell: dashboard, review queue, and the cluster grid. */

import { ApiClient } from "./api.js";
import { ClusterPageModel, DashboardModel, Tile } from "./models.js";
import { nextPendingPage, submitReview } from "./controller.js";

const POLL_MS = 1500;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly dashboard = new DashboardModel();
  page: ClusterPageModel | null = null;
  focusedItem: string | null = null;
  private notice = "";

  constructor(
    readonly client: ApiClient,
    readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    document.addEventListener("keydown", (ev) => this.onKey(ev));
    await this.refreshStatus();
    await this.loadNextTask();
    window.setInterval(() => void this.refreshStatus(), POLL_MS);
  }

  private async refreshStatus(): Promise<void> {
    try {
      const status = await this.client.getStatus();
      const hadPending = this.dashboard.pendingTasks;
      this.dashboard.update(status);
      if (!this.page && status.pending_tasks > 0 && hadPending === 0) {
        await this.loadNextTask();
      }
      this.render();
    } catch {
      this.notice = "service unreachable, retrying";
      this.render();
    }
  }

  private async loadNextTask(): Promise<void> {
    this.page = await nextPendingPage(this.client);
    this.focusedItem = null;
    if (this.page?.suggestedLabel) {
      this.dashboard.noteLabel(this.page.suggestedLabel);
    }
    this.render();
  }

  private async onSubmit(): Promise<void> {
    if (!this.page) return;
    const page = this.page;
    this.dashboard.noteLabel(page.clusterLabel);
    for (const tile of page.toggledTiles) {
      if (tile.labelDraft) this.dashboard.noteLabel(tile.labelDraft);
    }
    const outcome = await submitReview(this.client, page);
    if (outcome.kind === "submitted") {
      this.notice = `submitted ${page.taskId}; ${outcome.result.pending} tasks left`;
      await this.refreshStatus();
      await this.loadNextTask();
    } else if (outcome.kind === "stale") {
      this.notice = "someone else moved the campaign on; cluster reloaded, please review again";
      await this.refreshStatus();
      await this.loadNextTask();
    } else {
      this.notice = `submit failed (${outcome.message}); nothing was saved, retry when ready`;
      this.render();
    }
  }

  private async onIterate(): Promise<void> {
    try {
      const result = await this.client.iterate();
      this.notice = result.complete
        ? "campaign complete"
        : `scheduled round ${result.iteration}`;
    } catch (err) {
      this.notice = (err as Error).message;
    }
    await this.refreshStatus();
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLInputElement) return;
    if (!this.page) return;
    if (ev.key === "n") this.page.nextPage();
    else if (ev.key === "p") this.page.prevPage();
    else if (ev.key === "t" && this.focusedItem) {
      this.page.toggle(this.focusedItem);
    } else if (/^[0-9]$/.test(ev.key)) {
      const label = this.dashboard.knownLabels[Number(ev.key)];
      if (!label) return;
      const focused = this.focusedItem
        ? this.page.tiles.find((t) => t.itemId === this.focusedItem)
        : undefined;
      if (focused?.toggled) this.page.setDraft(focused.itemId, label);
      else this.page.setClusterLabel(label);
    } else {
      return;
    }
    ev.preventDefault();
    this.render();
  }

  // -- rendering ------------------------------------------------------------

  render(): void {
    this.root.replaceChildren(this.renderDashboard(), this.renderReview());
  }

  private renderDashboard(): HTMLElement {
    const panel = el("section", "panel dashboard");
    panel.append(el("h2", undefined, "campaign"));
    const s = this.dashboard.status;
    if (!s) {
      panel.append(el("p", "notice", this.notice || "loading status"));
      return panel;
    }
    const facts = el("div", "facts");
    const fact = (name: string, value: string) => {
      const box = el("div", "fact");
      box.append(el("span", "fact-name", name), el("span", "fact-value", value));
      facts.append(box);
    };
    fact("round", String(s.iteration));
    fact("train", String(s.train_size));
    fact("pool", String(s.pool_size));
    fact("pending", String(s.pending_tasks));
    const acc = s.metrics_latest?.accuracy_top1;
    fact("accuracy", acc !== undefined ? `${acc.toFixed(1)}%` : "n/a");
    panel.append(facts);

    if (this.dashboard.campaignComplete) {
      panel.append(el("p", "banner", "campaign complete"));
    } else {
      const button = el("button", "iterate", "start next round");
      button.disabled = !this.dashboard.canIterate();
      button.addEventListener("click", () => void this.onIterate());
      panel.append(button);
    }

    if (this.dashboard.history.length) {
      const table = el("table", "history");
      const head = el("tr");
      for (const name of ["round", "train", "pool", "accuracy"]) {
        head.append(el("th", undefined, name));
      }
      table.append(head);
      for (const row of this.dashboard.history) {
        const tr = el("tr");
        tr.append(
          el("td", undefined, String(row.iteration)),
          el("td", undefined, String(row.trainSize)),
          el("td", undefined, String(row.poolSize)),
          el("td", undefined, row.accuracy === null ? "n/a" : row.accuracy.toFixed(1)),
        );
        table.append(tr);
      }
      panel.append(table);
    }
    if (this.notice) panel.append(el("p", "notice", this.notice));
    return panel;
  }

  private renderReview(): HTMLElement {
    const panel = el("section", "panel review");
    panel.append(el("h2", undefined, "review"));
    const page = this.page;
    if (!page) {
      panel.append(
        el(
          "p",
          "notice",
          this.dashboard.pendingTasks
            ? "loading next cluster"
            : "no pending clusters",
        ),
      );
      return panel;
    }

    const header = el("div", "cluster-header");
    header.append(
      el("span", "task-id", page.taskId),
      el(
        "span",
        "task-size",
        `${page.tiles.length} items, ${page.toggledTiles.length} toggled`,
      ),
    );
    const labelInput = el("input", "cluster-label") as HTMLInputElement;
    labelInput.placeholder = page.suggestedLabel
      ? `cluster label (suggested: ${page.suggestedLabel})`
      : "cluster label";
    labelInput.value = page.clusterLabel;
    labelInput.setAttribute("list", "known-labels");
    labelInput.addEventListener("input", () => {
      page.setClusterLabel(labelInput.value);
      submit.disabled = !page.canSubmit();
    });
    header.append(labelInput);
    header.append(this.labelDatalist());
    panel.append(header);

    const grid = el("div", "grid");
    for (const tile of page.visibleTiles()) {
      grid.append(this.renderTile(page, tile));
    }
    panel.append(grid);

    const pager = el("div", "pager");
    const prev = el("button", undefined, "prev");
    const next = el("button", undefined, "next");
    prev.disabled = page.pageIndex === 0;
    next.disabled = page.pageIndex >= page.pageCount() - 1;
    prev.addEventListener("click", () => {
      page.prevPage();
      this.render();
    });
    next.addEventListener("click", () => {
      page.nextPage();
      this.render();
    });
    pager.append(prev, el("span", undefined, `page ${page.pageIndex + 1}/${page.pageCount()}`), next);
    panel.append(pager);

    const submit = el("button", "submit", "submit cluster");
    submit.disabled = !page.canSubmit();
    submit.addEventListener("click", () => void this.onSubmit());
    panel.append(submit);
    return panel;
  }

  private renderTile(page: ClusterPageModel, tile: Tile): HTMLElement {
    const box = el("div", tile.toggled ? "tile toggled" : "tile");
    box.tabIndex = 0;
    box.addEventListener("focus", () => {
      this.focusedItem = tile.itemId;
    });
    if (tile.thumbnail) {
      const img = el("img") as HTMLImageElement;
      img.src = tile.thumbnail;
      img.alt = tile.itemId;
      img.addEventListener("error", () => {
        img.replaceWith(el("div", "placeholder", tile.itemId));
      });
      box.append(img);
    } else {
      box.append(el("div", "placeholder", tile.itemId));
    }
    box.append(el("div", "tile-id", tile.itemId));
    box.addEventListener("click", (ev) => {
      if (ev.target instanceof HTMLInputElement) return;
      page.toggle(tile.itemId);
      this.focusedItem = tile.itemId;
      this.render();
    });
    if (tile.toggled) {
      const draft = el("input", "draft") as HTMLInputElement;
      draft.placeholder = "true label";
      draft.value = tile.labelDraft ?? "";
      draft.setAttribute("list", "known-labels");
      draft.addEventListener("click", (ev) => ev.stopPropagation());
      draft.addEventListener("input", () => {
        page.setDraft(tile.itemId, draft.value);
        const button = this.root.querySelector<HTMLButtonElement>("button.submit");
        if (button) button.disabled = !page.canSubmit();
      });
      box.append(draft);
    }
    return box;
  }

  private labelDatalist(): HTMLDataListElement {
    const list = el("datalist") as HTMLDataListElement;
    list.id = "known-labels";
    for (const label of this.dashboard.knownLabels) {
      const option = el("option") as HTMLOptionElement;
      option.value = label;
      list.append(option);
    }
    return list;
  }
}
