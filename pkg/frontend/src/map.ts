import { Api, ApiError, AreaReport, FeatureCollection, GeoFeature } from './api.js';

// qualitative palette (ColorBrewer Set2), semi-transparent fills
const PALETTE = ['#66c2a5', '#fc8d62', '#8da0cb', '#e78ac8', '#a6d854', '#ffd92f', '#e5c494'];
const FILL_ALPHA = '0.55';
const SVG_NS = 'http://www.w3.org/2000/svg';

export const TOPICS = [
  'Weather',
  'Construction',
  'Geotechnics',
  'RestrictedArea',
  'Planting',
  'Environment',
  'Disposal',
  'Generic',
];

type Ring = [number, number][];

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
  return document.createElementNS(SVG_NS, tag);
}

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

function rings(geometry: GeoFeature['geometry']): Ring[] {
  if (geometry.type === 'Polygon') return geometry.coordinates as Ring[];
  if (geometry.type === 'MultiPolygon') {
    return (geometry.coordinates as Ring[][]).flat();
  }
  return [];
}

/** One path per feature; y is flipped so north stays up. */
function pathData(geometry: GeoFeature['geometry']): string {
  const parts: string[] = [];
  for (const ring of rings(geometry)) {
    const cmds = ring.map(([x, y], i) => `${i === 0 ? 'M' : 'L'}${x} ${-y}`);
    parts.push(cmds.join(' ') + ' Z');
  }
  return parts.join(' ');
}

function extent(collections: FeatureCollection[]): [number, number, number, number] {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const fc of collections) {
    for (const feature of fc.features) {
      for (const ring of rings(feature.geometry)) {
        for (const [x, y] of ring) {
          minX = Math.min(minX, x);
          maxX = Math.max(maxX, x);
          minY = Math.min(minY, -y);
          maxY = Math.max(maxY, -y);
        }
      }
    }
  }
  if (!Number.isFinite(minX)) return [0, 0, 1, 1];
  return [minX, minY, maxX - minX, maxY - minY];
}

/** Blues, darker for heavier precipitation. */
function bandColor(value: number, values: number[]): string {
  const rank = values.indexOf(value);
  const t = values.length > 1 ? rank / (values.length - 1) : 1;
  const light = 85 - t * 45;
  return `hsl(215, 70%, ${light}%)`;
}

/**
 * Map explorer: feature layer with category colors, click selection
 * with a striped texture, an info panel fed by the area report, a
 * precipitation isoband overlay, and similar-area highlighting.
 */
export class MapExplorer {
  selected: string | null = null;
  highlightedTopic: string | null = null;

  private featuresByArea = new Map<string, SVGPathElement>();
  private categoryColor = new Map<string, string>();
  private svg!: SVGSVGElement;
  private weatherLayer!: SVGGElement;
  private panel!: HTMLElement;
  private docView!: HTMLElement;
  private weatherToggle!: HTMLInputElement;
  private lastLoad: Promise<void> = Promise.resolve();
  private hasWeather = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
  ) {}

  async start(): Promise<void> {
    const features = await this.api.features();
    let weather: FeatureCollection | null = null;
    try {
      weather = await this.api.weather();
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 404)) throw err;
    }
    this.hasWeather = weather !== null;
    this.build(features, weather);
  }

  /** Resolves when the selection made last has filled the panel. */
  idle(): Promise<void> {
    return this.lastLoad;
  }

  private build(features: FeatureCollection, weather: FeatureCollection | null): void {
    this.root.textContent = '';

    const toolbar = el('div', 'map-toolbar');
    const weatherLabel = el('label', 'weather-toggle-label', 'weather overlay');
    this.weatherToggle = document.createElement('input');
    this.weatherToggle.type = 'checkbox';
    this.weatherToggle.setAttribute('data-role', 'weather-toggle');
    this.weatherToggle.disabled = !this.hasWeather;
    this.weatherToggle.addEventListener('change', () => this.applyWeatherVisibility());
    weatherLabel.prepend(this.weatherToggle);
    toolbar.appendChild(weatherLabel);

    const filter = document.createElement('select');
    filter.setAttribute('data-role', 'topic-filter');
    filter.appendChild(new Option('no topic filter', ''));
    for (const topic of TOPICS) filter.appendChild(new Option(topic, topic));
    filter.addEventListener('change', () => {
      void this.highlightTopic(filter.value || null);
    });
    toolbar.appendChild(filter);
    this.root.appendChild(toolbar);

    const body = el('div', 'map-body');
    this.svg = svgEl('svg');
    const [x, y, w, h] = extent(weather ? [features, weather] : [features]);
    const pad = Math.max(w, h) * 0.05 || 1;
    this.svg.setAttribute('viewBox', `${x - pad} ${y - pad} ${w + 2 * pad} ${h + 2 * pad}`);
    this.svg.appendChild(this.buildDefs());
    this.svg.addEventListener('click', (ev) => {
      if (ev.target === this.svg) this.clearSelection();
    });

    this.weatherLayer = svgEl('g');
    this.weatherLayer.setAttribute('class', 'weather-layer');
    this.weatherLayer.setAttribute('display', 'none');
    if (weather) this.buildWeather(weather);
    this.svg.appendChild(this.weatherLayer);

    const featureLayer = svgEl('g');
    featureLayer.setAttribute('class', 'feature-layer');
    for (const feature of features.features) this.addFeature(featureLayer, feature);
    this.svg.appendChild(featureLayer);
    body.appendChild(this.svg);

    this.panel = el('aside', 'panel');
    this.panel.hidden = true;
    body.appendChild(this.panel);
    this.root.appendChild(body);

    this.docView = el('div', 'doc-view');
    this.docView.hidden = true;
    this.root.appendChild(this.docView);
  }

  private buildDefs(): SVGDefsElement {
    const defs = svgEl('defs');
    const pattern = svgEl('pattern');
    pattern.setAttribute('id', 'selection-stripes');
    pattern.setAttribute('width', '4');
    pattern.setAttribute('height', '4');
    pattern.setAttribute('patternUnits', 'userSpaceOnUse');
    pattern.setAttribute('patternTransform', 'rotate(45)');
    const ground = svgEl('rect');
    ground.setAttribute('width', '4');
    ground.setAttribute('height', '4');
    ground.setAttribute('fill', '#ffb347');
    const stripe = svgEl('rect');
    stripe.setAttribute('width', '2');
    stripe.setAttribute('height', '4');
    stripe.setAttribute('fill', '#e06000');
    pattern.appendChild(ground);
    pattern.appendChild(stripe);
    defs.appendChild(pattern);
    return defs;
  }

  private buildWeather(weather: FeatureCollection): void {
    const values = [
      ...new Set(weather.features.map((f) => Number(f.properties.band_value))),
    ].sort((a, b) => a - b);
    for (const feature of weather.features) {
      const value = Number(feature.properties.band_value);
      const path = svgEl('path');
      path.setAttribute('d', pathData(feature.geometry));
      path.setAttribute('fill', bandColor(value, values));
      path.setAttribute('fill-opacity', '0.5');
      path.setAttribute('data-band-value', String(value));
      this.weatherLayer.appendChild(path);
    }
  }

  private addFeature(layer: SVGGElement, feature: GeoFeature): void {
    const areaId = String(feature.properties.area_id);
    const category = String(feature.properties.category);
    if (!this.categoryColor.has(category)) {
      this.categoryColor.set(category, PALETTE[this.categoryColor.size % PALETTE.length]);
    }
    const path = svgEl('path');
    path.setAttribute('d', pathData(feature.geometry));
    path.setAttribute('fill-rule', 'evenodd');
    path.setAttribute('data-area-id', areaId);
    path.setAttribute('data-category', category);
    path.setAttribute('stroke', '#444');
    path.setAttribute('stroke-width', '0.15');
    this.paintFeature(path, false);
    path.addEventListener('click', () => {
      if (this.selected === areaId) this.clearSelection();
      else this.select(areaId);
    });
    layer.appendChild(path);
    this.featuresByArea.set(areaId, path);
  }

  private paintFeature(path: SVGPathElement, selected: boolean): void {
    if (selected) {
      path.setAttribute('fill', 'url(#selection-stripes)');
      path.setAttribute('fill-opacity', '1');
      path.setAttribute('class', 'feature selected');
    } else {
      const category = path.getAttribute('data-category') ?? '';
      path.setAttribute('fill', this.categoryColor.get(category) ?? '#999');
      path.setAttribute('fill-opacity', FILL_ALPHA);
      path.setAttribute('class', 'feature');
    }
  }

  select(areaId: string): void {
    if (this.selected) {
      const previous = this.featuresByArea.get(this.selected);
      if (previous) this.paintFeature(previous, false);
    }
    const path = this.featuresByArea.get(areaId);
    if (!path) return;
    this.selected = areaId;
    this.paintFeature(path, true);
    this.lastLoad = this.loadReport(areaId);
  }

  clearSelection(): void {
    if (this.selected) {
      const path = this.featuresByArea.get(this.selected);
      if (path) this.paintFeature(path, false);
    }
    this.selected = null;
    this.panel.hidden = true;
    this.panel.textContent = '';
  }

  private async loadReport(areaId: string): Promise<void> {
    let report: AreaReport;
    try {
      report = await this.api.areaReport(areaId, this.hasWeather);
    } catch (err) {
      // map stays as it is; only the panel reports the problem
      this.panel.hidden = false;
      this.panel.textContent = '';
      this.panel.appendChild(
        el('div', 'panel-error', err instanceof Error ? err.message : String(err)),
      );
      return;
    }
    if (this.selected !== areaId) return;
    this.renderPanel(report);
  }

  private renderPanel(report: AreaReport): void {
    this.panel.hidden = false;
    this.panel.textContent = '';
    this.panel.appendChild(el('h3', undefined, report.area_id));
    this.panel.appendChild(el('div', 'category', report.category));

    const bands = report.weather_bands ?? [];
    if (this.weatherToggle.checked && bands.length) {
      const hasWeatherProhibition = (report.restrictions['Prohibition'] ?? []).some(
        (entry) => entry.topic === 'Weather',
      );
      if (hasWeatherProhibition) {
        this.panel.appendChild(
          el(
            'div',
            'advisory',
            `weather-conditional prohibition; precipitation band ${Math.max(...bands)} over this area`,
          ),
        );
      }
      const list = el('ul', 'weather-bands');
      for (const value of bands) list.appendChild(el('li', undefined, String(value)));
      const section = el('section', 'weather-section');
      section.appendChild(el('h4', undefined, 'precipitation bands'));
      section.appendChild(list);
      this.panel.appendChild(section);
    }

    // group order and entry order come from the API untouched
    for (const [label, entries] of Object.entries(report.restrictions)) {
      const section = el('section', 'restriction-group');
      section.setAttribute('data-group', label);
      section.appendChild(el('h4', undefined, `${label} (${entries.length})`));
      const list = el('ol');
      for (const entry of entries) {
        const item = el('li', 'restriction-entry');
        item.setAttribute('data-sentence-id', entry.sentence_id);
        item.appendChild(el('span', 'confidence', entry.confidence.toFixed(2)));
        item.appendChild(el('span', 'topic', entry.topic));
        item.appendChild(el('div', 'sentence', entry.sentence));
        const docLink = el('button', 'doc-link', entry.title);
        docLink.setAttribute('data-doc-id', entry.doc_id);
        docLink.addEventListener('click', () => void this.openDocument(entry.doc_id));
        item.appendChild(docLink);
        list.appendChild(item);
      }
      section.appendChild(list);
      this.panel.appendChild(section);
    }

    const topics = Object.keys(report.similar_areas);
    if (topics.length) {
      const section = el('section', 'similar-section');
      section.appendChild(el('h4', undefined, 'similar areas by topic'));
      for (const topic of topics) {
        const button = el(
          'button',
          'similar-topic',
          `${topic} (${report.similar_areas[topic].length})`,
        );
        button.setAttribute('data-topic', topic);
        button.addEventListener('click', () => void this.highlightTopic(topic));
        section.appendChild(button);
      }
      this.panel.appendChild(section);
    }
  }

  async highlightTopic(topic: string | null): Promise<void> {
    for (const path of this.featuresByArea.values()) {
      path.removeAttribute('data-similar');
      path.setAttribute('stroke', '#444');
      path.setAttribute('stroke-width', '0.15');
    }
    this.highlightedTopic = topic;
    if (!topic) return;
    const { areas } = await this.api.topicAreas(topic);
    if (this.highlightedTopic !== topic) return;
    for (const areaId of areas) {
      const path = this.featuresByArea.get(areaId);
      if (!path) continue;
      path.setAttribute('data-similar', '1');
      path.setAttribute('stroke', '#e06000');
      path.setAttribute('stroke-width', '0.5');
    }
  }

  private applyWeatherVisibility(): void {
    this.weatherLayer.setAttribute('display', this.weatherToggle.checked ? 'inline' : 'none');
    // keep the band list in the open panel in step with the toggle
    if (this.selected) this.lastLoad = this.loadReport(this.selected);
  }

  private async openDocument(docId: string): Promise<void> {
    const doc = await this.api.document(docId);
    this.docView.hidden = false;
    this.docView.textContent = '';
    const close = el('button', 'doc-close', 'close');
    close.addEventListener('click', () => {
      this.docView.hidden = true;
    });
    this.docView.appendChild(close);
    this.docView.appendChild(el('h3', undefined, doc.title));
    this.docView.appendChild(el('div', 'doc-meta', `${doc.doc_id} · ${doc.region}`));
    this.docView.appendChild(el('pre', 'doc-text', doc.text));
  }
}
