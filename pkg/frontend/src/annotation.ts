import { Api, ApiError, BatchResponse } from './api.js';

export type ConsoleState = 'loading' | 'ready' | 'submitting' | 'training' | 'error';

const BATCH_RETRIES = 40;

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

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Annotation console for one label space.
 *
 * Drives the batch -> toggle -> submit -> retrain cycle against the
 * service. Checkbox state lives outside the DOM so a re-render (or a
 * failed submit) never loses the annotator's work; it is dropped only
 * when a new batch arrives.
 */
export class AnnotationConsole {
  state: ConsoleState = 'loading';
  batch: BatchResponse | null = null;
  notice = '';

  private readonly checks = new Map<string, Set<string>>();
  private readonly pollMs: number;
  private cycleDone: Promise<void> = Promise.resolve();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
    readonly space: string,
    opts: { pollMs?: number } = {},
  ) {
    this.pollMs = opts.pollMs ?? 500;
  }

  async start(): Promise<void> {
    await this.loadBatch();
  }

  /** Resolves when the submit kicked off last has finished its cycle. */
  idle(): Promise<void> {
    return this.cycleDone;
  }

  checked(sentenceId: string): Set<string> {
    let set = this.checks.get(sentenceId);
    if (!set) {
      set = new Set();
      this.checks.set(sentenceId, set);
    }
    return set;
  }

  private async loadBatch(): Promise<void> {
    this.state = 'loading';
    this.render();
    for (let attempt = 0; ; attempt++) {
      try {
        this.batch = await this.api.fetchBatch(this.space);
        break;
      } catch (err) {
        // a retrain may still be running; wait it out
        if (err instanceof ApiError && err.status === 503 && attempt < BATCH_RETRIES) {
          this.state = 'training';
          this.render();
          await sleep((err.retryAfterSeconds ?? 1) * 1000 * 0.25);
          continue;
        }
        this.state = 'error';
        this.notice = err instanceof Error ? err.message : String(err);
        this.render();
        return;
      }
    }
    this.checks.clear();
    this.state = 'ready';
    this.render();
  }

  submit(): void {
    if (this.state !== 'ready' || !this.batch) return;
    this.cycleDone = this.runSubmit();
  }

  private async runSubmit(): Promise<void> {
    const current = this.batch!;
    const assignments: Record<string, string[]> = {};
    for (const item of current.batch) {
      assignments[item.sentence_id] = [...this.checked(item.sentence_id)].sort();
    }
    this.state = 'submitting';
    this.render();
    try {
      await this.api.submitLabels(this.space, assignments);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale batch: someone else advanced the session
        this.notice = `batch out of date (${err.message}); reloaded`;
        await this.loadBatch();
        return;
      }
      // network trouble: keep every checkbox as it was and let the
      // annotator hit submit again
      this.notice = err instanceof Error ? err.message : String(err);
      this.state = 'ready';
      this.render();
      return;
    }
    this.notice = '';
    this.state = 'training';
    this.render();
    await this.waitForTraining();
    await this.loadBatch();
  }

  private async waitForTraining(): Promise<void> {
    for (;;) {
      try {
        const status = await this.api.status(this.space);
        if (!status.training) return;
      } catch {
        // transient; keep polling
      }
      await sleep(this.pollMs);
    }
  }

  render(): void {
    this.root.textContent = '';
    const head = el('div', 'console-head');
    head.appendChild(el('h2', undefined, `Annotate: ${this.space}`));
    head.appendChild(
      el('span', 'iteration', `iteration ${this.batch ? this.batch.iteration : '-'}`),
    );
    const status = el('span', `status status-${this.state}`, this.statusText());
    status.setAttribute('data-state', this.state);
    head.appendChild(status);
    this.root.appendChild(head);

    if (this.notice) {
      this.root.appendChild(el('div', 'notice', this.notice));
    }
    if (!this.batch) return;

    const table = el('table', 'batch');
    const header = el('tr');
    header.appendChild(el('th', undefined, 'sentence'));
    for (const label of this.batch.labels) header.appendChild(el('th', undefined, label));
    table.appendChild(header);

    for (const item of this.batch.batch) {
      const row = el('tr');
      row.setAttribute('data-sentence', item.sentence_id);
      const cell = el('td', 'sentence-text', item.text);
      cell.title = `${item.sentence_id} (score ${item.score.toFixed(3)})`;
      row.appendChild(cell);
      for (const label of this.batch.labels) {
        const td = el('td');
        const box = document.createElement('input');
        box.type = 'checkbox';
        box.checked = this.checked(item.sentence_id).has(label);
        box.setAttribute('data-label', label);
        box.addEventListener('change', () => {
          const set = this.checked(item.sentence_id);
          if (box.checked) set.add(label);
          else set.delete(label);
        });
        td.appendChild(box);
        row.appendChild(td);
      }
      table.appendChild(row);
    }
    this.root.appendChild(table);

    const submit = el('button', 'submit', 'Submit labels');
    submit.disabled = this.state !== 'ready';
    submit.addEventListener('click', () => this.submit());
    this.root.appendChild(submit);
  }

  private statusText(): string {
    switch (this.state) {
      case 'loading':
        return 'loading batch';
      case 'ready':
        return 'ready';
      case 'submitting':
        return 'submitting';
      case 'training':
        return 'training in progress';
      case 'error':
        return 'error';
    }
  }
}
