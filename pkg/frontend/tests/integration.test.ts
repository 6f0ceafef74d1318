import { ChildProcess, execSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { Api } from '../src/api.js';
import { AnnotationConsole } from '../src/annotation.js';
import { MapExplorer, TOPICS } from '../src/map.js';

/**
 * Drives the built UI against a real service process on a small
 * synthetic project: the annotation console through three full
 * batch -> submit -> retrain cycles, and the map explorer through the
 * select / restrictions / weather / similar-areas walkthrough.
 */

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let projectDir: string;
let server: ChildProcess;
let api: Api;

function cli(args: string): void {
  execSync(`landsift ${args} --project ${projectDir}`, { stdio: 'pipe' });
}

async function serverReady(): Promise<void> {
  for (let attempt = 0; attempt < 150; attempt++) {
    try {
      const res = await fetch(`${BASE}/api/areas`);
      if (res.ok) {
        await res.json();
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error('service never came up');
}

beforeAll(async () => {
  projectDir = mkdtempSync(join(tmpdir(), 'landsift-ui-'));
  cli('synth --sentences 1200 --seed 11');
  cli('textprep');
  cli('bootstrap --size 900 --seed 11');
  cli('annotate --annotators 1 --seed 11');
  cli('split --seed 11');
  cli('train-baseline --space restrictions --lr-scale 300000 --epochs 120');
  cli('train-baseline --space topics --lr-scale 2500000 --epochs 120');
  cli('graph build');
  writeFileSync(
    join(projectDir, 'al-config.json'),
    JSON.stringify({
      batch_size: 10,
      subsample_size: 256,
      rng_seed: 5,
      train: { max_epochs: 15, lr_scale: 300000, patience: 15 },
    }),
  );
  server = spawn('landsift', ['serve', '--project', projectDir, '--port', String(PORT)], {
    stdio: ['ignore', 'pipe', 'pipe'],
  });
  await serverReady();
  api = new Api(BASE);
});

afterAll(() => {
  if (server) server.kill('SIGTERM');
  if (projectDir) rmSync(projectDir, { recursive: true, force: true });
});

describe('annotation console against the live service', () => {
  it('completes three full batch/submit/retrain cycles', async () => {
    const root = document.createElement('div');
    document.body.appendChild(root);
    const console_ = new AnnotationConsole(root, api, 'restrictions', { pollMs: 150 });
    await console_.start();

    const startStatus = await api.status('restrictions');
    let lastVersion = startStatus.model_version;

    for (let cycle = 0; cycle < 3; cycle++) {
      expect(console_.state).toBe('ready');
      const rows = root.querySelectorAll('tr[data-sentence]');
      expect(rows.length).toBeGreaterThan(0);
      expect(rows.length).toBeLessThanOrEqual(10);
      expect(root.querySelector('.iteration')!.textContent).toBe(`iteration ${cycle}`);

      // label the first sentence, leave the rest empty
      const firstBox = root.querySelector<HTMLInputElement>(
        'tr[data-sentence] input[type=checkbox]',
      )!;
      firstBox.click();
      expect(firstBox.checked).toBe(true);

      console_.submit();
      await console_.idle();

      const status = await api.status('restrictions');
      expect(status.iteration).toBe(cycle + 1);
      expect(status.training).toBe(false);
      expect(status.model_version).toBeGreaterThan(lastVersion);
      lastVersion = status.model_version;

      // fresh batch, fresh checkboxes
      const boxes = [...root.querySelectorAll<HTMLInputElement>('input[type=checkbox]')];
      expect(boxes.length).toBeGreaterThan(0);
      expect(boxes.every((box) => !box.checked)).toBe(true);
    }

    expect(root.querySelector('.iteration')!.textContent).toBe('iteration 3');
    expect(api.versions.model).toContain('restrictions=');
    root.remove();
  }, 120000);
});

describe('map explorer against the live service', () => {
  it('walks select, grouped restrictions, weather overlay, similar areas', async () => {
    // pick an area whose documents carry classified restrictions
    const { areas } = await api.areas();
    expect(areas.length).toBeGreaterThan(0);
    let chosen = '';
    for (const area of areas) {
      const report = await api.areaReport(area.area_id);
      if (Object.values(report.restrictions).some((entries) => entries.length > 0)) {
        chosen = area.area_id;
        break;
      }
    }
    expect(chosen).not.toBe('');

    const root = document.createElement('div');
    document.body.appendChild(root);
    const explorer = new MapExplorer(root, api);
    await explorer.start();

    const paths = root.querySelectorAll('path[data-area-id]');
    expect(paths.length).toBe(areas.length);

    const target = root.querySelector<SVGPathElement>(`path[data-area-id="${chosen}"]`)!;
    target.dispatchEvent(new MouseEvent('click', { bubbles: true }));
    await explorer.idle();

    expect(target.getAttribute('fill')).toBe('url(#selection-stripes)');
    const panel = root.querySelector<HTMLElement>('.panel')!;
    expect(panel.hidden).toBe(false);
    expect(panel.querySelector('h3')!.textContent).toBe(chosen);

    const groups = [...panel.querySelectorAll('[data-group]')].map((g) =>
      g.getAttribute('data-group'),
    );
    expect(groups).toEqual(['Prohibition', 'Requirement']);
    for (const group of groups) {
      const confidences = [
        ...panel.querySelectorAll(`[data-group="${group}"] .confidence`),
      ].map((node) => Number(node.textContent));
      const sorted = [...confidences].sort((a, b) => b - a);
      expect(confidences).toEqual(sorted);
    }

    // weather overlay on: isoband layer appears, panel lists the bands
    const toggle = root.querySelector<HTMLInputElement>('[data-role=weather-toggle]')!;
    expect(toggle.disabled).toBe(false);
    toggle.checked = true;
    toggle.dispatchEvent(new Event('change'));
    await explorer.idle();
    const layer = root.querySelector('g.weather-layer')!;
    expect(layer.getAttribute('display')).toBe('inline');
    expect(layer.querySelectorAll('path[data-band-value]').length).toBeGreaterThan(0);
    const report = await api.areaReport(chosen, true);
    const listed = [...panel.querySelectorAll('.weather-bands li')].map((n) =>
      Number(n.textContent),
    );
    expect(listed).toEqual(report.weather_bands ?? []);

    // similar areas: highlight exactly what the topic endpoint returns
    let topic = '';
    let expected: string[] = [];
    for (const candidate of TOPICS) {
      const res = await api.topicAreas(candidate);
      if (res.areas.length > 0) {
        topic = candidate;
        expected = res.areas;
        break;
      }
    }
    expect(topic).not.toBe('');
    await explorer.highlightTopic(topic);
    const highlighted = [...root.querySelectorAll('path[data-similar]')]
      .map((p) => p.getAttribute('data-area-id'))
      .sort();
    expect(highlighted).toEqual([...expected].sort());

    // document view from a restriction entry
    const docLink = panel.querySelector<HTMLButtonElement>('button.doc-link');
    expect(docLink).not.toBeNull();
    docLink!.dispatchEvent(new MouseEvent('click', { bubbles: true }));
    await new Promise((resolve) => setTimeout(resolve, 300));
    const view = root.querySelector<HTMLElement>('.doc-view')!;
    expect(view.hidden).toBe(false);
    expect(view.querySelector('.doc-text')!.textContent!.length).toBeGreaterThan(0);

    // empty click clears the selection again
    root.querySelector('svg')!.dispatchEvent(new MouseEvent('click', { bubbles: true }));
    expect(explorer.selected).toBeNull();
    expect(panel.hidden).toBe(true);
    root.remove();
  }, 120000);
});
