/** Browser entry: load clouds from the service, wire the viewer, the lasso
 * and click selection, class buttons, undo and commit. */

import { ServiceClient } from './api.js';
import { AnnotationSession, UNLABELED } from './session.js';
import { Viewer } from './viewer.js';
import { clickSelect, polygonSelect } from './selection.js';
import { classColor } from './palette.js';
import { Cloud } from './sqnc.js';

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function boot(): Promise<void> {
  const banner = el<HTMLDivElement>('banner');
  const client = new ServiceClient('');
  let meta;
  let reference: Cloud;
  let candidates: Cloud;
  try {
    meta = await client.getMeta();
    reference = await client.getReference();
    candidates = await client.getCandidates();
  } catch (err) {
    banner.textContent = `annotation service unreachable: ${err}`;
    banner.style.display = 'block';
    return;
  }

  const session = new AnnotationSession(meta.n, meta.c);
  const existing = await client.getLabels();
  session.loadFromServer(existing.points);

  const canvas = el<HTMLCanvasElement>('gl');
  const overlay = el<HTMLCanvasElement>('overlay');
  const resize = () => {
    for (const c of [canvas, overlay]) {
      c.width = window.innerWidth;
      c.height = window.innerHeight - 56;
    }
  };
  resize();
  window.addEventListener('resize', () => { resize(); viewer.draw(); });

  // frame the scene from the reference bounds
  const center: [number, number, number] = [0, 0, 0];
  let radius = 1;
  if (reference.n) {
    const lo = [Infinity, Infinity, Infinity];
    const hi = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < reference.n; i++) {
      for (let a = 0; a < 3; a++) {
        lo[a] = Math.min(lo[a], reference.positions[3 * i + a]);
        hi[a] = Math.max(hi[a], reference.positions[3 * i + a]);
      }
    }
    for (let a = 0; a < 3; a++) center[a] = (lo[a] + hi[a]) / 2;
    radius = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) * 0.8 + 1e-3;
  }

  const viewer = new Viewer(canvas, center, radius);
  viewer.setReference(reference);
  if (candidates.n === 0) {
    banner.textContent = 'no candidate points at this ratio; reference view only';
    banner.style.display = 'block';
  } else {
    viewer.setCandidates(candidates);
  }
  viewer.refreshCandidateColors(candidates, session, meta.c);
  viewer.draw();

  // class buttons from /meta; nothing dataset-specific in the client
  const classBar = el<HTMLDivElement>('classes');
  meta.class_names.forEach((name, cls) => {
    const [r, g, b] = classColor(cls, meta.c);
    const button = document.createElement('button');
    button.textContent = `${cls}: ${name}`;
    button.style.borderColor = `rgb(${r},${g},${b})`;
    button.onclick = () => {
      session.activeClass = cls;
      document.querySelectorAll('#classes button').forEach(
        (other) => other.classList.remove('active'));
      button.classList.add('active');
    };
    if (cls === 0) button.classList.add('active');
    classBar.appendChild(button);
  });

  const status = el<HTMLSpanElement>('status');
  const refresh = () => {
    viewer.refreshCandidateColors(candidates, session, meta.c);
    viewer.draw();
    const pending = session.unsyncedCount
      ? ` | ${session.unsyncedCount} edit(s) unsynced` : '';
    const err = session.lastError ? ` | rejected: ${session.lastError}` : '';
    status.textContent = `${session.labels.size} labeled${pending}${err}`;
  };

  const sync = () => session.flush(client).catch(() => undefined).then(refresh);

  // mouse interaction: left-drag orbit, shift-drag pan, wheel zoom,
  // L toggles lasso mode, click labels the nearest candidate
  let dragging = false;
  let lassoMode = false;
  let moved = 0;
  const ctx = overlay.getContext('2d')!;
  canvas.parentElement!.addEventListener('mousedown', (e) => {
    dragging = true;
    moved = 0;
    if (lassoMode) {
      viewer.beginLasso();
      viewer.extendLasso(e.offsetX, e.offsetY);
    }
  });
  window.addEventListener('mousemove', (e) => {
    if (!dragging) return;
    moved += Math.abs(e.movementX) + Math.abs(e.movementY);
    if (lassoMode) {
      viewer.extendLasso(e.offsetX, e.offsetY);
      viewer.drawLassoOverlay(ctx);
      return;
    }
    if (e.shiftKey) viewer.pan(e.movementX, e.movementY);
    else viewer.orbit(e.movementX, e.movementY);
    viewer.draw();
  });
  window.addEventListener('mouseup', (e) => {
    if (!dragging) return;
    dragging = false;
    if (lassoMode) {
      const polygon = viewer.finishLasso();
      viewer.drawLassoOverlay(ctx);
      if (polygon.length >= 3 && candidates.n) {
        const occlusion = el<HTMLInputElement>('occlusion').checked;
        const ids = polygonSelect(
          candidates.positions, viewer.camera, canvas.width, canvas.height,
          polygon, { occlusionTest: occlusion });
        session.assign(ids, session.activeClass);
        sync();
      }
      return;
    }
    if (moved < 4 && candidates.n) {
      const id = clickSelect(candidates.positions, viewer.camera,
                             canvas.width, canvas.height, e.offsetX, e.offsetY);
      if (id !== null) {
        session.assign([id], session.activeClass);
        sync();
      }
    }
  });
  canvas.parentElement!.addEventListener('wheel', (e) => {
    e.preventDefault();
    viewer.zoom(e.deltaY > 0 ? 1.1 : 0.9);
    viewer.draw();
  });
  window.addEventListener('keydown', (e) => {
    if (e.key === 'l' || e.key === 'L') {
      lassoMode = !lassoMode;
      el<HTMLButtonElement>('lasso').classList.toggle('active', lassoMode);
    } else if ((e.ctrlKey || e.metaKey) && e.key === 'z') {
      if (session.undo()) sync();
    }
  });
  el<HTMLButtonElement>('lasso').onclick = () => {
    lassoMode = !lassoMode;
    el<HTMLButtonElement>('lasso').classList.toggle('active', lassoMode);
  };
  el<HTMLButtonElement>('undo').onclick = () => {
    if (session.undo()) sync();
  };
  el<HTMLButtonElement>('commit').onclick = async () => {
    try {
      const out = await session.commit(client);
      status.textContent = `committed ${out.count} labels to ${out.path}`;
    } catch (err) {
      status.textContent = `commit failed: ${err}`;
    }
  };

  refresh();
}

boot();
