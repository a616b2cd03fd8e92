import init, { spectrum_scan, adiabatic_sweep, state_trajectory, preset } from "./pkg/nhadiabatic_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);

function currentSpec() {
  const spec = JSON.parse(preset($("preset").value));
  const gamma = parseFloat($("gamma").value);
  if (spec.family === "pt_dimer") spec.gamma = { kind: "constant", value: gamma };
  if (spec.family === "cyclic_loop" && spec.base.kind === "pt_dimer") spec.base.gamma = gamma;
  return JSON.stringify(spec);
}

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

function setStatus(id, text, bad = false) {
  const el = $(id);
  el.textContent = text;
  el.classList.toggle("bad", bad);
}

// series: [{x: [], y: [], color, label, dashed}]
function plot(canvas, series, { logX = false, logY = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = { l: 62, r: 12, t: 12, b: 34 };
  ctx.clearRect(0, 0, w, h);
  const tx = (v) => (logX ? Math.log10(v) : v);
  const ty = (v) => (logY ? Math.log10(v) : v);
  const pts = series.flatMap((s) => s.x.map((x, i) => [tx(x), ty(s.y[i])])).filter(([a, b]) => isFinite(a) && isFinite(b));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const margin = 0.05 * (y1 - y0);
  y0 -= margin; y1 += margin;
  const px = (v) => pad.l + ((v - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const py = (v) => h - pad.b - ((v - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  for (let i = 0; i <= 4; i++) {
    const xv = x0 + ((x1 - x0) * i) / 4, yv = y0 + ((y1 - y0) * i) / 4;
    const fx = logX ? `1e${xv.toFixed(1)}` : xv.toPrecision(3);
    const fy = logY ? `1e${yv.toFixed(1)}` : yv.toPrecision(3);
    ctx.fillText(fx, px(xv) - 14, h - pad.b + 14);
    ctx.fillText(fy, 4, py(yv) + 4);
  }
  ctx.fillText(xLabel, w / 2, h - 4);
  ctx.save();
  ctx.translate(12, h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();

  series.forEach((s, n) => {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dashed ? [5, 4] : []);
    ctx.lineWidth = 1.8;
    ctx.beginPath();
    let started = false;
    s.x.forEach((x, i) => {
      const a = tx(x), b = ty(s.y[i]);
      if (!isFinite(a) || !isFinite(b)) { started = false; return; }
      started ? ctx.lineTo(px(a), py(b)) : ctx.moveTo(px(a), py(b));
      started = true;
      if (s.markers) ctx.fillRect(px(a) - 2.5, py(b) - 2.5, 5, 5);
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad.r - 150, pad.t + 14 + 14 * n);
  });
}

function drawSpectrum() {
  try {
    const scan = call(spectrum_scan, currentSpec(), 200);
    const series = [];
    scan.re.forEach((re, i) => series.push({ x: scan.s, y: re, color: COLORS[i], label: `Re λ${i}` }));
    scan.im.forEach((im, i) => series.push({ x: scan.s, y: im, color: COLORS[i], label: `Im λ${i}`, dashed: true }));
    plot($("spectrum"), series, { xLabel: "s", yLabel: "eigenvalue" });
    const verdict = scan.hypotheses_met ? "real and gapped: adiabatic theorem applies" : "hypotheses fail: diagnostic only";
    setStatus("spectrum-status", `${verdict}; min gap ${scan.min_gap.toExponential(3)}, max |Im λ| ${scan.max_imag.toExponential(3)}`, !scan.hypotheses_met);
  } catch (e) {
    setStatus("spectrum-status", e.message, true);
  }
}

function runSweep() {
  try {
    const tList = $("tlist").value.split(",").map((v) => parseFloat(v)).filter((v) => isFinite(v));
    const out = call(adiabatic_sweep, currentSpec(), JSON.stringify(tList), parseInt($("label").value, 10));
    const ref = out.t.map((t) => out.epsilon[0] * (out.t[0] / t));
    plot($("sweep"), [
      { x: out.t, y: out.epsilon, color: COLORS[0], label: "ε(T)", markers: true },
      { x: out.t, y: ref, color: "#888", label: "∝ 1/T", dashed: true },
    ], { logX: true, logY: true, xLabel: "T", yLabel: "ε" });
    const p = out.fitted_exponent === null ? "n/a" : out.fitted_exponent.toFixed(3);
    setStatus("sweep-status", `fitted exponent ${p}; sup‖U‖ ${Math.max(...out.sup_u).toPrecision(4)}, sup‖U⁻¹‖ ${Math.max(...out.sup_uinv).toPrecision(4)}` +
      (out.hypotheses_met ? "" : "  (outside the hypotheses: no rate is promised)"), !out.hypotheses_met);
  } catch (e) {
    setStatus("sweep-status", e.message, true);
  }
}

function runTrajectory() {
  try {
    const t = parseFloat($("t-single").value);
    const out = call(state_trajectory, currentSpec(), t, parseInt($("label").value, 10));
    const series = out.populations.map((p, i) => ({ x: out.s, y: p, color: COLORS[i], label: `|ψ${i}|²` }));
    series.push({ x: out.s, y: out.deviation, color: "#000", label: "‖ψ − prediction‖", dashed: true });
    plot($("trajectory"), series, { xLabel: "s = t/T", yLabel: "" });
    const maxDev = Math.max(...out.deviation);
    setStatus("traj-status", `max deviation from the adiabatic prediction ${maxDev.toExponential(3)}; final norm ${out.norm.at(-1).toPrecision(5)}`, !out.hypotheses_met);
  } catch (e) {
    setStatus("traj-status", e.message, true);
  }
}

function syncControls() {
  const value = $("preset").value;
  $("gamma-box").style.display = value.startsWith("pt") ? "" : "none";
  $("gamma-out").textContent = parseFloat($("gamma").value).toFixed(2);
  drawSpectrum();
}

await init();
$("preset").addEventListener("change", syncControls);
$("gamma").addEventListener("input", syncControls);
$("sweep-run").addEventListener("click", runSweep);
$("traj-run").addEventListener("click", runTrajectory);
syncControls();
runSweep();
runTrajectory();
