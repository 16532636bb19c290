import init, { hprView, depthPrompt, scaleSweep } from "./pkg/pcfill_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function common() {
  return [$("shape").value, num("points"), num("seed") >>> 0];
}

function guarded(fn) {
  return () => {
    $("error").textContent = "";
    try {
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

// Fixed oblique view so the chosen camera direction is visible.
function project(x, y, z, w, h) {
  const a = 0.6, b = 0.35;
  const u = x * Math.cos(a) - y * Math.sin(a);
  const v = (x * Math.sin(a) + y * Math.cos(a)) * Math.sin(b) + z * Math.cos(b);
  const s = w * 0.32;
  return [w / 2 + u * s, h / 2 - v * s];
}

function drawHpr() {
  const [shape, points, seed] = common();
  const az = num("az"), el = num("el");
  const t = performance.now();
  const data = hprView(shape, points, seed, az, el, num("gamma"));
  const ms = performance.now() - t;
  const c = $("hpr"), g = c.getContext("2d");
  g.fillStyle = "#111";
  g.fillRect(0, 0, c.width, c.height);
  let seen = 0;
  for (let pass = 0; pass < 2; pass++) {
    for (let i = 0; i < data.length; i += 4) {
      const vis = data[i + 3] > 0;
      if (vis !== (pass === 1)) continue;
      seen += vis;
      const [px, py] = project(data[i], data[i + 1], data[i + 2], c.width, c.height);
      g.fillStyle = vis ? "#f90" : "#555";
      g.fillRect(px - 1, py - 1, 2, 2);
    }
  }
  const r = (Math.PI / 180), d = 1.3;
  const cam = [d * Math.cos(el * r) * Math.cos(az * r), d * Math.cos(el * r) * Math.sin(az * r), d * Math.sin(el * r)];
  const [cx, cy] = project(...cam, c.width, c.height);
  g.fillStyle = "#fff";
  g.beginPath();
  g.arc(cx, cy, 5, 0, 2 * Math.PI);
  g.fill();
  $("hpr-info").textContent = `${seen} of ${data.length / 4} visible, ${ms.toFixed(0)} ms`;
}

function drawDepth() {
  const [shape, points, seed] = common();
  const n = num("res");
  const t = performance.now();
  const rgba = depthPrompt(shape, points, seed, num("az"), num("el"), n);
  const ms = performance.now() - t;
  const c = $("depth");
  c.width = 3 * n;
  c.height = n;
  c.style.width = `${3 * 256}px`;
  c.style.height = "256px";
  c.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), 3 * n, n), 0, 0);
  $("depth-info").textContent = `${ms.toFixed(0)} ms`;
}

function drawSweep() {
  const [shape, points, seed] = common();
  const t = performance.now();
  const curve = scaleSweep(shape, points, seed, num("strue"), num("beta"));
  const ms = performance.now() - t;
  const pts = [];
  for (let i = 0; i < curve.length; i += 2) pts.push([curve[i], curve[i + 1]]);
  const ok = pts.filter(([, o]) => Number.isFinite(o));
  const c = $("sweep"), g = c.getContext("2d");
  g.fillStyle = "#111";
  g.fillRect(0, 0, c.width, c.height);
  if (ok.length === 0) return;
  const [s0, s1] = [pts[0][0], pts[pts.length - 1][0]];
  const top = Math.max(...ok.map(([, o]) => o));
  const pad = 24;
  const x = (s) => pad + ((s - s0) / (s1 - s0)) * (c.width - 2 * pad);
  const y = (o) => c.height - pad - (o / top) * (c.height - 2 * pad);
  g.strokeStyle = "#6cf";
  g.beginPath();
  ok.forEach(([s, o], i) => (i ? g.lineTo(x(s), y(o)) : g.moveTo(x(s), y(o))));
  g.stroke();
  const best = ok.reduce((a, b) => (b[1] < a[1] ? b : a));
  g.fillStyle = "#f90";
  g.beginPath();
  g.arc(x(best[0]), y(best[1]), 4, 0, 2 * Math.PI);
  g.fill();
  g.fillStyle = "#aaa";
  g.fillText(s0.toFixed(2), pad, c.height - 6);
  g.fillText(s1.toFixed(2), c.width - pad - 20, c.height - 6);
  $("sweep-info").textContent = `selected ${best[0].toFixed(2)}, ${ms.toFixed(0)} ms`;
}

await init();
const hpr = guarded(drawHpr);
for (const id of ["shape", "points", "seed", "az", "el", "gamma"]) $(id).addEventListener("input", hpr);
$("depth-go").addEventListener("click", guarded(drawDepth));
$("sweep-go").addEventListener("click", guarded(drawSweep));
hpr();
