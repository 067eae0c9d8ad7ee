/** Review console: queue pane, comparison pane with token diff highlighting,
 * confidence histogram panel, and keyboard-first resolution flow.
 *
 * Keyboard: j / ArrowDown next item, k / ArrowUp previous item,
 * digits 1-9 and 0 select candidate rank (0 = rank 10), Enter resolves with
 * the selected candidate, u marks undeliverable.
 */
import { ApiClient, ApiError, HistogramBin, ReviewItem } from "./api.js";
import { diffPair } from "./diff.js";

export interface AppOptions {
  resolver?: string;
  refreshMs?: number;
}

export class ReviewApp {
  items: ReviewItem[] = [];
  pendingCount = 0;
  selectedIndex = 0;
  selectedRank = 1;
  errorMessage: string | null = null;
  histogram: HistogramBin[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private options: AppOptions = {},
  ) {}

  async start(): Promise<void> {
    this.root.addEventListener("keydown", (ev) => this.onKey(ev as KeyboardEvent));
    await this.refresh();
    const period = this.options.refreshMs ?? 0;
    if (period > 0) {
      this.timer = setInterval(() => void this.refresh(), period);
    }
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.api.getQueue("pending");
      this.items = page.items;
      this.pendingCount = page.pending_count;
      this.errorMessage = null;
      try {
        this.histogram = await this.api.getConfidenceHistogram();
      } catch {
        this.histogram = [];
      }
    } catch (err) {
      this.errorMessage =
        err instanceof Error ? `connection error: ${err.message}` : "connection error";
    }
    this.clampSelection();
    this.render();
  }

  get selected(): ReviewItem | null {
    return this.items[this.selectedIndex] ?? null;
  }

  private clampSelection(): void {
    if (this.selectedIndex >= this.items.length) {
      this.selectedIndex = Math.max(0, this.items.length - 1);
    }
    const item = this.selected;
    const max = item ? item.decision.candidates.length : 1;
    if (this.selectedRank > max) this.selectedRank = 1;
  }

  selectItem(index: number): void {
    if (index >= 0 && index < this.items.length) {
      this.selectedIndex = index;
      this.selectedRank = 1;
      this.render();
    }
  }

  selectRank(rank: number): void {
    const item = this.selected;
    if (item && rank >= 1 && rank <= item.decision.candidates.length) {
      this.selectedRank = rank;
      this.render();
    }
  }

  /** Resolve the selected item with the selected candidate. Optimistic
   * removal: the item leaves the list immediately and is restored when the
   * server rejects the call (a 409 instead triggers a refresh, since someone
   * else already resolved it). */
  async resolveSelected(undeliverable = false): Promise<void> {
    const item = this.selected;
    if (!item) return;
    const body: { chosen_id?: string; undeliverable?: boolean; resolver?: string } =
      { resolver: this.options.resolver };
    if (undeliverable) {
      body.undeliverable = true;
    } else {
      const cand = item.decision.candidates[this.selectedRank - 1];
      if (!cand) return;
      body.chosen_id = cand.id;
    }
    const index = this.selectedIndex;
    this.items = this.items.filter((i) => i.item_id !== item.item_id);
    this.pendingCount = Math.max(0, this.pendingCount - 1);
    this.clampSelection();
    this.render();
    try {
      await this.api.resolve(item.item_id, body);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh(); // lost the race; server state wins
        return;
      }
      // rollback the optimistic removal
      this.items.splice(index, 0, item);
      this.pendingCount += 1;
      this.errorMessage =
        err instanceof Error ? `resolve failed: ${err.message}` : "resolve failed";
      this.clampSelection();
      this.render();
    }
  }

  onKey(ev: KeyboardEvent): void {
    if (ev.key === "j" || ev.key === "ArrowDown") {
      this.selectItem(this.selectedIndex + 1);
    } else if (ev.key === "k" || ev.key === "ArrowUp") {
      this.selectItem(this.selectedIndex - 1);
    } else if (/^[0-9]$/.test(ev.key)) {
      this.selectRank(ev.key === "0" ? 10 : Number(ev.key));
    } else if (ev.key === "Enter") {
      void this.resolveSelected(false);
    } else if (ev.key === "u") {
      void this.resolveSelected(true);
    } else {
      return;
    }
    ev.preventDefault();
  }

  render(): void {
    const banner = this.errorMessage
      ? `<div class="banner error" data-testid="error-banner">${escapeHtml(this.errorMessage)}</div>`
      : "";
    const queue = this.renderQueue();
    const comparison = this.renderComparison();
    const histogram = this.renderHistogram();
    this.root.innerHTML = `
      ${banner}
      <header>
        <h1>Review queue</h1>
        <span data-testid="pending-count">${this.pendingCount} pending</span>
      </header>
      <main>
        <section class="queue" data-testid="queue">${queue}</section>
        <section class="comparison" data-testid="comparison">${comparison}</section>
        <section class="histogram" data-testid="histogram">${histogram}</section>
      </main>`;
  }

  private renderQueue(): string {
    if (this.items.length === 0) {
      return `<p class="empty" data-testid="empty-state">No items waiting for review.</p>`;
    }
    return `<ul>${this.items
      .map((item, i) => {
        const sel = i === this.selectedIndex ? " selected" : "";
        const conf = (item.decision.confidence * 100).toFixed(1);
        return `<li class="queue-row${sel}" data-testid="queue-row" data-item-id="${item.item_id}">
          <span class="query">${escapeHtml(item.decision.query)}</span>
          <span class="confidence">${conf}%</span>
        </li>`;
      })
      .join("")}</ul>`;
  }

  private renderComparison(): string {
    const item = this.selected;
    if (!item) return "";
    const rows = item.decision.candidates
      .map((cand) => {
        const diff = diffPair(item.decision.query, candText(item, cand.id));
        const spans = diff.candidate
          .map(
            (s) =>
              `<span class="token${s.highlighted ? " highlight" : ""}">${escapeHtml(s.token)}</span>`,
          )
          .join(" ");
        const sel = cand.rank === this.selectedRank ? " selected" : "";
        const pct = Math.round(cand.probability * 100);
        return `<li class="candidate${sel}" data-testid="candidate" data-rank="${cand.rank}">
          <span class="rank">${cand.rank}</span>
          <span class="tokens">${spans}</span>
          <span class="bar"><span class="fill" style="width:${pct}%"></span></span>
          <span class="prob">${cand.probability.toFixed(3)}</span>
        </li>`;
      })
      .join("");
    const querySpans = diffPair(
      item.decision.query,
      candText(item, item.decision.candidates[this.selectedRank - 1]?.id ?? ""),
    )
      .query.map(
        (s) =>
          `<span class="token${s.highlighted ? " highlight" : ""}">${escapeHtml(s.token)}</span>`,
      )
      .join(" ");
    return `<div class="query-line" data-testid="query-line">${querySpans}</div>
      <ol>${rows}</ol>`;
  }

  private renderHistogram(): string {
    if (this.histogram.length === 0) return "";
    const max = Math.max(1, ...this.histogram.map((b) => b.count));
    const bars = this.histogram
      .map(
        (b) =>
          `<div class="hbar" data-testid="hbar" title="[${b.start.toFixed(2)},${b.end.toFixed(2)}): ${b.count}" style="height:${Math.round((100 * b.count) / max)}%"></div>`,
      )
      .join("");
    return `<div class="bars">${bars}</div>`;
  }
}

/** The service serializes candidate display text into the decision record;
 * fall back to the id when absent so the row still renders. */
function candText(item: ReviewItem, id: string): string {
  const withText = item.decision.candidates.find((c) => c.id === id) as
    | (typeof item.decision.candidates[number] & { text?: string })
    | undefined;
  return withText?.text ?? id;
}

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
