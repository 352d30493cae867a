import init, { select_batch, nystrom_spectrum, surface, SoberDemo } from "./pkg/sober_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function toCanvas(c, p) {
  return [p[0] * c.width, (1 - p[1]) * c.height];
}

function dot(ctx, c, p, r, color) {
  const [x, y] = toCanvas(c, p);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

function runBatch() {
  const c = $("b-canvas");
  const ctx = c.getContext("2d");
  try {
    const v = JSON.parse(select_batch(num("b-n"), num("b-k"), num("b-ls"), num("b-seed")));
    ctx.clearRect(0, 0, c.width, c.height);
    v.cloud.forEach((p) => dot(ctx, c, p, 1.2, "#bbb"));
    const wmax = Math.max(...v.weights);
    v.batch.forEach((p, i) => dot(ctx, c, p, 3 + 9 * Math.sqrt(v.weights[i] / wmax), "rgba(214,96,0,0.8)"));
    $("b-out").textContent =
      `batch size       ${v.batch.length}\n` +
      `wce (recombined) ${v.wce.toExponential(3)}\n` +
      `wce (random)     ${v.random_wce.toExponential(3)}`;
  } catch (e) {
    $("b-out").textContent = String(e);
  }
}

let demo = null;
let heat = null;
const RES = 84;

function drawHeat(ctx, c) {
  const vals = heat;
  const lo = Math.min(...vals);
  const hi = Math.max(...vals);
  const cell = c.width / RES;
  for (let i = 0; i < RES; i++) {
    for (let j = 0; j < RES; j++) {
      const t = (vals[i * RES + j] - lo) / (hi - lo || 1);
      const g = Math.round(255 - 120 * t);
      ctx.fillStyle = `rgb(${g},${g},255)`;
      ctx.fillRect(j * cell, c.height - (i + 1) * cell, cell + 1, cell + 1);
    }
  }
}

function resetOpt() {
  const fn = $("o-fn").value;
  demo = new SoberDemo(fn, num("o-k"), num("o-seed"));
  heat = surface(fn, RES);
  const c = $("o-canvas");
  drawHeat(c.getContext("2d"), c);
  $("o-out").textContent = "no observations yet";
}

function stepOpt() {
  if (!demo) resetOpt();
  const c = $("o-canvas");
  const ctx = c.getContext("2d");
  try {
    const v = JSON.parse(demo.step());
    drawHeat(ctx, c);
    v.measure.forEach((p) => dot(ctx, c, p, 1 + 2 * p[2], "rgba(60,60,60,0.5)"));
    v.batch.forEach((p) => dot(ctx, c, p, 4, "rgb(214,96,0)"));
    const [x, y] = toCanvas(c, v.best_x);
    ctx.fillStyle = "#c00";
    ctx.font = "20px sans-serif";
    ctx.fillText("★", x - 7, y + 7);
    $("o-out").textContent =
      `iteration ${v.iteration}\n` +
      `best y    ${v.best_y.toFixed(5)}\n` +
      `best x    (${v.best_x[0].toFixed(3)}, ${v.best_x[1].toFixed(3)})`;
  } catch (e) {
    $("o-out").textContent = String(e);
  }
}

function runSpectrum() {
  const c = $("s-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const vals = JSON.parse(nystrom_spectrum(num("s-m"), num("s-ls"), 7));
  const floor = -12;
  const w = c.width / Math.max(vals.length, 1);
  ctx.fillStyle = "#36c";
  vals.forEach((v, i) => {
    const h = ((Math.max(Math.log10(v), floor) - floor) / -floor) * (c.height - 10);
    ctx.fillRect(i * w, c.height - h, Math.max(w - 1, 1), h);
  });
  ctx.fillStyle = "#222";
  ctx.fillText(`${vals.length} eigenvalues kept, axis 1e-12 .. 1`, 8, 14);
}

await init();
$("b-go").onclick = runBatch;
$("o-reset").onclick = resetOpt;
$("o-step").onclick = stepOpt;
$("s-go").onclick = runSpectrum;
runBatch();
resetOpt();
runSpectrum();
