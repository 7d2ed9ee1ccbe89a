import init, { mip_explorer, curves, calibration } from "./pkg/samm2d_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

function plot(canvas, series, xr, yr, labels) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const m = 30;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(m, 8, w - m - 8, h - m - 8);
  const sx = (x) => m + ((x - xr[0]) / (xr[1] - xr[0])) * (w - m - 8);
  const sy = (y) => h - m - ((y - yr[0]) / (yr[1] - yr[0])) * (h - m - 16);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(String(xr[0]), m, h - m + 14);
  ctx.fillText(String(xr[1]), w - 24, h - m + 14);
  ctx.fillText(String(+yr[1].toFixed(3)), 2, 16);
  ctx.fillText(String(yr[0]), 2, h - m);
  series.forEach((pts, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    pts.forEach(([x, y], j) => (j ? ctx.lineTo(sx(x), sy(Math.min(y, yr[1]))) : ctx.moveTo(sx(x), sy(Math.min(y, yr[1])))));
    ctx.stroke();
    if (labels && labels[i]) {
      ctx.fillStyle = COLORS[i % COLORS.length];
      ctx.fillText(labels[i], w - 110, 22 + 14 * i);
    }
  });
  return { sx, sy, ctx };
}

function table(el, rows) {
  el.innerHTML = rows.map((r, i) => `<tr>${r.map((c) => (i ? `<td>${c}</td>` : `<th>${c}</th>`)).join("")}</tr>`).join("");
}

function fail(section, e) {
  let p = section.querySelector(".err");
  if (!p) {
    p = document.createElement("p");
    p.className = "err";
    section.appendChild(p);
  }
  p.textContent = e ? e.message : "";
}

function drawMip() {
  try {
    const r = call(mip_explorer, +$("mip-seed").value, $("mip-pos").checked, $("mip-view").value);
    const canvas = $("mip-canvas");
    const ctx = canvas.getContext("2d");
    const img = ctx.createImageData(r.width, r.height);
    for (let i = 0; i < r.pixels.length; i++) {
      const v = r.pixels[i];
      const masked = $("mip-mask").checked && r.mask && r.mask[i];
      img.data.set(masked ? [255, Math.round(v * 0.4), Math.round(v * 0.4), 255] : [v, v, v, 255], 4 * i);
    }
    const tmp = new OffscreenCanvas(r.width, r.height);
    tmp.getContext("2d").putImageData(img, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
    table($("mip-scores"), [["view", "enhancement score"], ...r.views.map((v) => [v.name + (v.name === r.best ? " *" : ""), v.score.toFixed(4)])]);
    fail($("mip"));
  } catch (e) {
    fail($("mip"), e);
  }
}

function drawCurves() {
  for (const k of ["alpha", "gamma", "eps"]) $(`c-${k}-v`).textContent = $(`c-${k}`).value;
  try {
    const epochs = +$("c-epochs").value;
    const r = call(curves, +$("c-warmup").value, +$("c-t0").value, +$("c-mult").value, 0, epochs,
      +$("c-alpha").value, +$("c-gamma").value, +$("c-eps").value);
    plot($("c-lr"), [r.lr], [0, epochs], [0, 1], ["lr factor"]);
    const ymax = Math.max(...r.focal_pos.map((p) => p[1]), ...r.focal_neg.map((p) => p[1]));
    plot($("c-focal"), [r.focal_pos, r.focal_neg], [0, 1], [0, Math.min(ymax, 2)], ["loss, y = 1", "loss, y = 0"]);
    fail($("curves"));
  } catch (e) {
    fail($("curves"), e);
  }
}

function drawCalibration() {
  $("k-sep-v").textContent = $("k-sep").value;
  $("k-tau-v").textContent = $("k-tau").value;
  try {
    const tau = +$("k-tau").value;
    const r = call(calibration, +$("k-n").value, +$("k-sep").value, +$("k-seed").value, tau, +$("k-prev").value);
    const { sx, sy, ctx } = plot($("k-roc"), [r.roc, [[0, 0], [1, 1]]], [0, 1], [0, 1], ["ROC", "chance"]);
    const a = r.at_tau;
    ctx.fillStyle = "#000";
    ctx.beginPath();
    ctx.arc(sx(1 - a.specificity), sy(a.sensitivity), 4, 0, 2 * Math.PI);
    ctx.fill();
    const cols = (i) => r.curve.map((p) => [p[0], p[i]]);
    const s = plot($("k-sweep"), [cols(1), cols(2), cols(3)], [0.1, 0.9], [0, 1], ["F1", "sensitivity", "specificity"]);
    s.ctx.strokeStyle = "#000";
    s.ctx.beginPath();
    s.ctx.moveTo(s.sx(tau), s.sy(0));
    s.ctx.lineTo(s.sx(tau), s.sy(1));
    s.ctx.stroke();
    const f = (x) => x.toFixed(3);
    table($("k-table"), [
      ["", "value"],
      ["AUC", f(r.auc)],
      ["τ*", f(r.tau_star)],
      ["F1*", f(r.f1_star)],
      ["sensitivity @ τ", f(a.sensitivity)],
      ["specificity @ τ", f(a.specificity)],
      ["precision @ τ", f(a.precision)],
      ["tp / fp / tn / fn", `${a.tp} / ${a.fp} / ${a.tn} / ${a.fn}`],
      ["savings @ τ", Math.round(r.savings_at_tau).toLocaleString()],
      ...r.modes.map((m) => [`${m.name} (τ ${f(m.tau)})`, Math.round(m.projected_savings).toLocaleString()]),
    ]);
    fail($("cal"));
  } catch (e) {
    fail($("cal"), e);
  }
}

await init();
for (const id of ["mip-seed", "mip-pos", "mip-view", "mip-mask"]) $(id).addEventListener("input", drawMip);
for (const id of ["c-warmup", "c-t0", "c-mult", "c-epochs", "c-alpha", "c-gamma", "c-eps"]) $(id).addEventListener("input", drawCurves);
for (const id of ["k-sep", "k-tau", "k-prev", "k-n", "k-seed"]) $(id).addEventListener("input", drawCalibration);
drawMip();
drawCurves();
drawCalibration();
