import init, { tracking_errors, taper_row, learn_observed_count } from "./pkg/enkf_switch_demo.js";

const $ = (id) => document.getElementById(id);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, 10);
  ctx.lineTo(40, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

function line(ctx, xs, ys, color, xmax, ymin, ymax, w, h) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  let pen = false;
  for (let i = 0; i < xs.length; i++) {
    if (!Number.isFinite(ys[i])) { pen = false; continue; }
    const x = 40 + (xs[i] / xmax) * (w - 50);
    const y = (h - 20) - ((ys[i] - ymin) / (ymax - ymin)) * (h - 30);
    if (pen) ctx.lineTo(x, y); else ctx.moveTo(x, y);
    pen = true;
  }
  ctx.stroke();
}

function runTracking() {
  const c = $("tr-canvas"), ctx = c.getContext("2d");
  const v = tracking_errors(+$("tr-seed").value, +$("tr-steps").value, +$("tr-eps").value);
  const t = [], fixed = [], random = [];
  for (let i = 0; i < v.length; i += 3) {
    t.push(v[i]);
    fixed.push(Math.log10(Math.max(v[i + 1], 1e-3)));
    random.push(Math.log10(Math.max(v[i + 2], 1e-3)));
  }
  axes(ctx, c.width, c.height);
  const tmax = t[t.length - 1] || 1;
  line(ctx, t, fixed, "#c0392b", tmax, -1, 4, c.width, c.height);
  line(ctx, t, random, "#2c6fbb", tmax, -1, 4, c.width, c.height);
  const blown = fixed.findIndex((y) => !Number.isFinite(y) || y > 3);
  $("tr-out").textContent = blown >= 0
    ? `fixed run left the attractor at t = ${t[blown].toFixed(2)}`
    : "fixed run stayed below the divergence threshold";
}

function drawTaper() {
  const c = $("gc-canvas"), ctx = c.getContext("2d");
  const r = +$("gc-r").value, n = +$("gc-n").value;
  $("gc-val").textContent = `r_loc = ${r}`;
  const row = taper_row(r, n);
  axes(ctx, c.width, c.height);
  const bw = (c.width - 50) / row.length;
  ctx.fillStyle = "#2c6fbb";
  row.forEach((v, j) => {
    const hgt = v * (c.height - 30);
    ctx.fillRect(40 + j * bw + 1, c.height - 20 - hgt, bw - 2, hgt);
  });
}

function runLearning() {
  const c = $("nj-canvas"), ctx = c.getContext("2d");
  const v = learn_observed_count(+$("nj-seed").value, +$("nj-n").value, +$("nj-cycles").value);
  const star = v[v.length - 1];
  const arms = [];
  for (let i = 0; i + 2 < v.length; i += 3) arms.push({ arm: v[i], plays: v[i + 1] });
  const pmax = Math.max(...arms.map((a) => a.plays));
  axes(ctx, c.width, c.height);
  const bw = (c.width - 50) / arms.length;
  arms.forEach((a, k) => {
    const hgt = (a.plays / pmax) * (c.height - 30);
    ctx.fillStyle = a.arm === star ? "#c0392b" : "#2c6fbb";
    ctx.fillRect(40 + k * bw + 1, c.height - 20 - hgt, bw - 2, hgt);
    ctx.fillStyle = "#444";
    ctx.fillText(String(a.arm), 40 + k * bw + 2, c.height - 6);
  });
  $("nj-out").textContent = `most-played N_J = ${star}`;
}

await init();
$("tr-run").onclick = runTracking;
$("gc-r").oninput = drawTaper;
$("gc-n").onchange = drawTaper;
$("nj-run").onclick = runLearning;
drawTaper();
