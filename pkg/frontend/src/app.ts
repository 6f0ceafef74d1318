import { Api } from './api.js';
import { AnnotationConsole } from './annotation.js';
import { MapExplorer } from './map.js';

declare global {
  interface Window {
    API_BASE?: string;
  }
}

/** Wire the two views into a tabbed shell. */
export function mountApp(root: HTMLElement, api: Api): void {
  root.textContent = '';

  const nav = document.createElement('nav');
  const views = new Map<string, HTMLElement>();
  const consoles = new Map<string, AnnotationConsole>();
  let mapStarted = false;
  const explorerHost = document.createElement('div');
  const explorer = new MapExplorer(explorerHost, api);

  function show(name: string): void {
    for (const [key, host] of views) host.hidden = key !== name;
    for (const button of nav.querySelectorAll('button')) {
      button.classList.toggle('active', button.dataset.view === name);
    }
    if (name === 'map' && !mapStarted) {
      mapStarted = true;
      void explorer.start();
    }
  }

  for (const space of ['restrictions', 'topics']) {
    const host = document.createElement('div');
    host.hidden = true;
    views.set(`annotate-${space}`, host);
    root.appendChild(host);
    const console_ = new AnnotationConsole(host, api, space);
    consoles.set(space, console_);
    void console_.start();
  }
  explorerHost.hidden = true;
  views.set('map', explorerHost);
  root.appendChild(explorerHost);

  for (const [name, label] of [
    ['annotate-restrictions', 'Annotate restrictions'],
    ['annotate-topics', 'Annotate topics'],
    ['map', 'Map'],
  ] as const) {
    const button = document.createElement('button');
    button.textContent = label;
    button.dataset.view = name;
    button.addEventListener('click', () => show(name));
    nav.appendChild(button);
  }
  root.prepend(nav);
  show('annotate-restrictions');
}

const rootEl = document.getElementById('app');
if (rootEl) {
  mountApp(rootEl, new Api(window.API_BASE ?? ''));
}
