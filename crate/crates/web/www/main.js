import init, { Scene } from './pkg/medaxis_web.js';

const $ = (id) => document.getElementById(id);
const canvas = $('view');
const ctx = canvas.getContext('2d');

let scene = null;
let data = null;
let picked = null;
let yaw = 0.6, pitch = 0.3;

function status(text) {
  $('status').textContent = text;
}

function load(make) {
  try {
    const next = make();
    scene?.free();
    scene = next;
    data = {
      surface: scene.surfacePoints(),
      territory: scene.territoryPoints(),
      links: scene.axisLinks(),
      points: scene.axisPoints(),
      ids: scene.axisIds(),
      linkNodes: scene.axisLinkNodes(),
    };
    data.center = centroid(data.surface);
    data.scale = 1 / radius(data.surface.length ? data.surface : data.points, data.center);
    picked = null;
    $('summary').textContent = JSON.stringify(JSON.parse(scene.summary()), null, 1);
    $('result').textContent = '';
    $('save').disabled = false;
    status('Ready.');
    draw();
  } catch (e) {
    status(`Error: ${e.message ?? e}`);
  }
}

function centroid(v) {
  const c = [0, 0, 0];
  for (let i = 0; i < v.length; i += 3) for (let k = 0; k < 3; k++) c[k] += v[i + k];
  return c.map((x) => x / Math.max(1, v.length / 3));
}

function radius(v, c) {
  let r = 1e-9;
  for (let i = 0; i < v.length; i += 3) {
    r = Math.max(r, Math.hypot(v[i] - c[0], v[i + 1] - c[1], v[i + 2] - c[2]));
  }
  return r;
}

// Orthographic view: yaw about z, then pitch.
function project(v, i) {
  const x = v[i] - data.center[0], y = v[i + 1] - data.center[1], z = v[i + 2] - data.center[2];
  const cy = Math.cos(yaw), sy = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const u = cy * x - sy * y;
  const w = sy * x + cy * y;
  const s = 0.45 * Math.min(canvas.width, canvas.height) * data.scale;
  return [canvas.width / 2 + s * u, canvas.height / 2 - s * (cp * z - sp * w)];
}

function dots(v, color, step) {
  ctx.fillStyle = color;
  for (let i = 0; i < v.length; i += 3 * step) {
    const [x, y] = project(v, i);
    ctx.fillRect(x, y, 1, 1);
  }
}

function draw() {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!data) return;
  dots(data.territory, '#c9d6e8', 1);
  dots(data.surface, '#bbb', Math.max(1, Math.floor(data.surface.length / 60000)));
  const down = picked ? new Set(picked.downstream) : null;
  ctx.lineWidth = 2;
  for (let i = 0, n = 0; i < data.links.length; i += 6, n++) {
    const [ax, ay] = project(data.links, i);
    const [bx, by] = project(data.links, i + 3);
    ctx.strokeStyle = down && down.has(data.linkNodes[n]) ? '#d33' : '#236';
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
  }
}

function pick(px, py) {
  let best = null, bestD = 100;
  for (let i = 0; i < data.ids.length; i++) {
    const [x, y] = project(data.points, 3 * i);
    const d = (x - px) ** 2 + (y - py) ** 2;
    if (d < bestD) [best, bestD] = [data.ids[i], d];
  }
  return best;
}

let drag = null;
canvas.addEventListener('pointerdown', (e) => {
  drag = { x: e.offsetX, y: e.offsetY, moved: false };
});
canvas.addEventListener('pointermove', (e) => {
  if (!drag || !data) return;
  const dx = e.offsetX - drag.x, dy = e.offsetY - drag.y;
  if (Math.abs(dx) + Math.abs(dy) > 2) drag.moved = true;
  yaw += dx * 0.01;
  pitch = Math.max(-1.5, Math.min(1.5, pitch + dy * 0.01));
  drag.x = e.offsetX;
  drag.y = e.offsetY;
  draw();
});
canvas.addEventListener('pointerup', (e) => {
  const click = drag && !drag.moved;
  drag = null;
  if (!click || !scene) return;
  const node = pick(e.offsetX, e.offsetY);
  if (node === null) return;
  picked = JSON.parse(scene.obstruct(node));
  const pct = (f) => (f === null ? '-' : `${(100 * f).toFixed(1)}%`);
  $('result').textContent =
    `node ${picked.node}: ${picked.downstream.length} nodes downstream\n` +
    `tube volume ${picked.artery_volume.toFixed(3)} (${pct(picked.artery_fraction)})\n` +
    `territory volume ${picked.territory_volume?.toFixed(3) ?? '-'} (${pct(picked.territory_fraction)})`;
  draw();
});
window.addEventListener('resize', draw);

$('run').addEventListener('click', () => {
  status('Running…');
  // Let the status repaint before the synchronous run.
  setTimeout(() => load(() => Scene.fromFixture($('kind').value, Number($('noise').value), Number($('seed').value))), 20);
});

$('file').addEventListener('change', async (e) => {
  const file = e.target.files[0];
  if (!file) return;
  status(`Reading ${file.name}…`);
  const text = await file.text();
  load(() => Scene.fromBundle(text));
});

$('save').addEventListener('click', () => {
  const blob = new Blob([scene.bundleJson()], { type: 'application/json' });
  const a = document.createElement('a');
  a.href = URL.createObjectURL(blob);
  a.download = 'bundle.json';
  a.click();
  URL.revokeObjectURL(a.href);
});

await init();
status('Ready. Run a fixture or open a bundle.');
