import init, { calibrate, alpha_sweep, entropy_histograms } from "./pkg/labeldist_web.js";

const COLORS = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];
const $ = (id) => document.getElementById(id);

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui, sans-serif";
  return ctx;
}

// Grouped bars: groups[i][j] is series j in group i.
function bars(canvas, groups, groupLabels, seriesLabels, yMax) {
  const ctx = clear(canvas);
  const pad = { l: 40, r: 10, t: 24, b: 30 };
  const w = canvas.width - pad.l - pad.r;
  const h = canvas.height - pad.t - pad.b;
  const gw = w / groups.length;
  const bw = (gw * 0.8) / seriesLabels.length;
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, pad.t + h);
  ctx.lineTo(pad.l + w, pad.t + h);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText(String(+yMax.toFixed(3)), 2, pad.t + 4);
  groups.forEach((vals, i) => {
    vals.forEach((v, j) => {
      const bh = (v / yMax) * h;
      ctx.fillStyle = COLORS[j % COLORS.length];
      ctx.fillRect(pad.l + i * gw + gw * 0.1 + j * bw, pad.t + h - bh, bw - 1, bh);
    });
    ctx.fillStyle = "#444";
    ctx.fillText(groupLabels[i], pad.l + i * gw + gw * 0.1, pad.t + h + 14);
  });
  seriesLabels.forEach((s, j) => {
    ctx.fillStyle = COLORS[j % COLORS.length];
    ctx.fillRect(pad.l + j * 190, 4, 10, 10);
    ctx.fillStyle = "#222";
    ctx.fillText(s, pad.l + j * 190 + 14, 13);
  });
}

function line(canvas, xs, ys, markX, xLabel, yLabel) {
  const ctx = clear(canvas);
  const pad = { l: 50, r: 10, t: 20, b: 34 };
  const w = canvas.width - pad.l - pad.r;
  const h = canvas.height - pad.t - pad.b;
  const finite = ys.filter((y) => y !== null && Number.isFinite(y));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [0, Math.max(...finite) * 1.05];
  const px = (x) => pad.l + ((x - x0) / (x1 - x0)) * w;
  const py = (y) => pad.t + h - ((y - y0) / (y1 - y0)) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w, h);
  ctx.fillStyle = "#444";
  ctx.fillText(xLabel, pad.l + w / 2, canvas.height - 4);
  ctx.fillText(yLabel, 4, pad.t - 6);
  ctx.fillText(y1.toFixed(3), 4, pad.t + 10);
  ctx.fillText(x0.toFixed(2), pad.l, pad.t + h + 14);
  ctx.fillText(x1.toFixed(2), pad.l + w - 24, pad.t + h + 14);
  ctx.strokeStyle = COLORS[0];
  ctx.lineWidth = 2;
  ctx.beginPath();
  let drawing = false;
  xs.forEach((x, i) => {
    const y = ys[i];
    if (y === null || !Number.isFinite(y)) { drawing = false; return; }
    if (drawing) ctx.lineTo(px(x), py(y)); else ctx.moveTo(px(x), py(y));
    drawing = true;
  });
  ctx.stroke();
  ctx.lineWidth = 1;
  const i = xs.indexOf(markX);
  if (i >= 0) {
    ctx.fillStyle = "#c44e52";
    ctx.font = "20px system-ui, sans-serif";
    ctx.fillText("★", px(markX) - 7, py(ys[i]) + 7);
  }
}

function show(id, text, isError = false) {
  $(id).textContent = text;
  $(id).className = isError ? "err" : "note";
}

function updateCalibration() {
  const z = new Float64Array([+$("z0").value, +$("z1").value, +$("z2").value]);
  const s = +$("scale").value;
  const a = +$("alpha").value;
  $("scale-v").textContent = `${s.toFixed(2)} (T = ${(1 / s).toFixed(2)})`;
  $("alpha-v").textContent = a.toFixed(2);
  try {
    const r = JSON.parse(calibrate(z, s, a, $("mode").value));
    const series = [r.softmax, r.temp_scaled, r.smoothed ?? { probs: [0, 0, 0], entropy: NaN }];
    const groups = [0, 1, 2].map((k) => series.map((d) => d.probs[k]));
    bars($("calib"), groups, ["entailment", "neutral", "contradiction"], ["softmax", "temperature-scaled", "smoothed"], 1);
    const h = series.map((d) => (Number.isFinite(d.entropy) ? d.entropy.toFixed(3) : "undefined"));
    show("calib-msg", `entropy: softmax ${h[0]}, scaled ${h[1]}, smoothed ${h[2]}` +
      (r.smoothed ? "" : " (literal smoothing would make the top probability negative)"));
  } catch (e) {
    show("calib-msg", String(e), true);
  }
}

function runSweep() {
  show("sweep-msg", "training...");
  setTimeout(() => {
    try {
      const r = JSON.parse(alpha_sweep(+$("tau").value, +$("seed").value));
      line($("sweep"), r.alphas, r.kl, r.matched_alpha, "alpha (standard smoothing)", "KL(human || model)");
      const best = r.alphas[r.kl.indexOf(Math.min(...r.kl))];
      show("sweep-msg", `human entropy ${r.human_entropy.toFixed(3)}; entropy-matched alpha ${r.matched_alpha}; lowest KL at alpha ${best}`);
    } catch (e) {
      show("sweep-msg", String(e), true);
    }
  }, 10);
}

function runHistograms() {
  show("hist-msg", "training...");
  setTimeout(() => {
    try {
      const r = JSON.parse(entropy_histograms(+$("tau").value, +$("seed").value));
      const labels = r.edges.slice(0, -1).map((e) => e.toFixed(2));
      const groups = labels.map((_, i) => [r.human[i], r.baseline[i], r.temp_scaled[i], r.multi_annot[i]]);
      const yMax = Math.max(...groups.flat());
      bars($("hist"), groups, labels, ["true", "single-label model", `temperature ${r.temperature}`, "multi-annotation"], yMax);
      show("hist-msg", `mean KL to truth: single-label ${r.kl[0].toFixed(4)}, scaled ${r.kl[1].toFixed(4)}, multi-annotation ${r.kl[2].toFixed(4)}`);
    } catch (e) {
      show("hist-msg", String(e), true);
    }
  }, 10);
}

await init();
for (const id of ["z0", "z1", "z2", "scale", "alpha", "mode"]) $(id).addEventListener("input", updateCalibration);
$("run-sweep").addEventListener("click", runSweep);
$("run-hist").addEventListener("click", runHistograms);
updateCalibration();
