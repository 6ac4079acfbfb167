import init, { cell_view, q_curve, thin_vs_limit } from "./pkg/thinhom_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function color(t) {
  // blue to red through white
  const s = Math.max(-1, Math.min(1, t));
  const c = Math.round(255 * (1 - Math.abs(s)));
  return s < 0 ? `rgb(${c},${c},255)` : `rgb(255,${c},${c})`;
}

function drawCell(view) {
  const cv = $("cell-canvas");
  const ctx = cv.getContext("2d");
  const nodes = view.nodes, tris = view.triangles, phi = view.phi;
  let ymax = 0, pmax = 1e-300;
  for (let i = 1; i < nodes.length; i += 2) ymax = Math.max(ymax, nodes[i]);
  for (const v of phi) pmax = Math.max(pmax, Math.abs(v));
  const sx = (cv.width - 20), sy = (cv.height - 20) / ymax;
  const X = (i) => 10 + sx * nodes[2 * i];
  const Y = (i) => cv.height - 10 - sy * nodes[2 * i + 1];
  ctx.clearRect(0, 0, cv.width, cv.height);
  for (let t = 0; t < tris.length; t += 3) {
    const [a, b, c] = [tris[t], tris[t + 1], tris[t + 2]];
    ctx.fillStyle = color((phi[a] + phi[b] + phi[c]) / (3 * pmax));
    ctx.beginPath();
    ctx.moveTo(X(a), Y(a));
    ctx.lineTo(X(b), Y(b));
    ctx.lineTo(X(c), Y(c));
    ctx.closePath();
    ctx.fill();
  }
  $("cell-out").textContent = `q = ${view.q.toFixed(6)}, max |phi| = ${pmax.toExponential(3)}`;
}

function plot(canvas, series, xr, yr) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, m = 30;
  const X = (x) => m + (W - 2 * m) * (x - xr[0]) / (xr[1] - xr[0]);
  const Y = (y) => H - m - (H - 2 * m) * (y - yr[0]) / (yr[1] - yr[0]);
  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(m, m, W - 2 * m, H - 2 * m);
  ctx.fillStyle = "#444";
  ctx.fillText(yr[1].toPrecision(3), 2, m + 4);
  ctx.fillText(yr[0].toPrecision(3), 2, H - m);
  ctx.fillText(xr[0].toPrecision(3), m, H - m + 14);
  ctx.fillText(xr[1].toPrecision(3), W - m - 20, H - m + 14);
  series.forEach(({ x, y, style, label }, k) => {
    ctx.strokeStyle = style;
    ctx.beginPath();
    x.forEach((xi, i) => (i ? ctx.lineTo(X(xi), Y(y[i])) : ctx.moveTo(X(xi), Y(y[i]))));
    ctx.stroke();
    ctx.fillStyle = style;
    ctx.fillText(label, W - m - 110, m + 14 + 14 * k);
  });
}

function range(arrays) {
  let lo = Infinity, hi = -Infinity;
  for (const a of arrays) for (const v of a) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const pad = 0.05 * (hi - lo || 1);
  return [lo - pad, hi + pad];
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).textContent = String(e.message || e);
  }
}

function runCell() {
  guard("cell-out", () => drawCell(cell_view(num("cell-p"), num("cell-a"), 64, 16)));
}

function runCurve() {
  guard("curve-out", () => {
    const ps = Float64Array.from({ length: 15 }, (_, i) => 1.3 + 0.2 * i);
    const qs = q_curve(num("curve-a"), ps, 32, 8);
    plot($("curve-canvas"), [{ x: ps, y: qs, style: "#c33", label: "q(p)" }], [ps[0], ps[ps.length - 1]], range([qs]));
    $("curve-out").textContent = `q in [${Math.min(...qs).toFixed(4)}, ${Math.max(...qs).toFixed(4)}]`;
  });
}

function runComparison() {
  guard("cmp-out", () => {
    const c = thin_vs_limit(num("cmp-p"), parseFloat($("cmp-eps").value), num("cmp-a"));
    const x = c.x1;
    plot($("cmp-canvas"), [
      { x, y: c.bottom, style: "#36c", label: "u_eps, bottom" },
      { x, y: c.top, style: "#3a3", label: "u_eps, top" },
      { x, y: c.limit, style: "#000", label: "u0" },
    ], [0, 1], range([c.bottom, c.top, c.limit]));
    $("cmp-out").textContent = `q = ${c.q.toFixed(6)}, ||u_eps - u0|| = ${c.error.toExponential(3)}`;
  });
}

await init();
$("cell-run").onclick = runCell;
$("curve-run").onclick = runCurve;
$("cmp-run").onclick = runComparison;
runCell();
runCurve();
runComparison();
