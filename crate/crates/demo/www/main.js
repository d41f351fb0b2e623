import init, { geometricRun, weightTrajectories, ouProfile } from "./pkg/we_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// series: [{ x, y, color, log }]; draws on a shared box with optional log-y axis.
function plot(canvas, series, { logY = false, marks = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const ty = (y) => (logY ? Math.log10(Math.max(y, 1e-300)) : y);
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y.map(ty)).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((ty(y) - y0) / (y1 - y0)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText((logY ? "1e" : "") + y1.toPrecision(3), 2, pad);
  ctx.fillText((logY ? "1e" : "") + y0.toPrecision(3), 2, h - pad);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 15);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 15);
  ctx.strokeStyle = "rgba(0,0,0,0.15)";
  for (const m of marks) {
    ctx.beginPath(); ctx.moveTo(px(m), pad); ctx.lineTo(px(m), h - pad); ctx.stroke();
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
    ctx.stroke();
  }
}

function guard(out, f) {
  try { f(); } catch (e) { $(out).textContent = "error: " + e; }
}

function runGeometric() {
  guard("g-out", () => {
    const r = JSON.parse(geometricRun(num("g-a"), num("g-n"), num("g-t"), num("g-seed")));
    const x = r.running.map((_, i) => i * r.stride);
    plot($("g-plot"), [
      { x, y: r.running, color: "#1f77b4" },
      { x, y: x.map(() => r.exact), color: "#d62728" },
    ], { logY: true });
    $("g-out").textContent =
      `estimate ${r.estimate.toExponential(4)}  exact ${r.exact.toExponential(4)}  weight sum ${r.final_weight_sum}`;
  });
}

function runWeights() {
  guard("w-out", () => {
    const stride = Math.max(1, Math.floor(num("w-t") / 400));
    const r = JSON.parse(weightTrajectories(num("w-n"), num("w-t"), num("w-r"), num("w-boost"), stride, 7));
    const series = [
      ...r.generic.map((y) => ({ x: r.steps, y, color: "rgba(214,39,40,0.4)" })),
      ...r.weighted_ensemble.map((y) => ({ x: r.steps, y, color: "rgba(31,119,180,0.8)" })),
    ];
    plot($("w-plot"), series, { logY: true });
    const last = (rows) => rows.map((row) => row[row.length - 1]);
    const median = (a) => { const s = [...a].sort((p, q) => p - q); return s[Math.floor(s.length / 2)]; };
    $("w-out").textContent =
      `final weight sum, median: binned ${median(last(r.weighted_ensemble))}  generic ${median(last(r.generic)).toExponential(3)}`;
  });
}

function runOu() {
  guard("o-out", () => {
    const a = num("o-a");
    const r = JSON.parse(ouProfile(a, num("o-dt"), -2, a + 0.5, num("o-tol"), 400));
    const top = Math.max(...r.hbar);
    plot($("o-plot"), [
      { x: r.x, y: r.vbar.map((v) => v / Math.max(...r.vbar)), color: "#1f77b4" },
      { x: r.x, y: r.hbar.map((v) => v / top), color: "#2ca02c" },
    ], { marks: r.mesh });
    $("o-out").textContent =
      `p ${r.tail_probability.toExponential(4)}  bins ${r.mesh.length + 1}  ` +
      `MCMC constant ${r.mcmc_constant.toFixed(1)}  optimal ${r.optimal_constant.toFixed(1)}`;
  });
}

await init();
$("g-run").onclick = runGeometric;
$("w-run").onclick = runWeights;
$("o-run").onclick = runOu;
runOu();
