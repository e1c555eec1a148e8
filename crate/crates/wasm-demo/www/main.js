import init, { bf_curve, simulate, analyze } from "./pkg/bfdr_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x, d = 4) => (x == null ? "" : Number(x).toPrecision(d));
const COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"];

function run(errorId, f) {
  $(errorId).textContent = "";
  try {
    f();
  } catch (e) {
    $(errorId).textContent = e.message ?? String(e);
  }
}

// Draws polylines on a canvas with simple axes. Each series is {x, y, color, width}.
function plot(canvas, series, { xLabel, yLabel, hline, vline }) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 45;
  ctx.clearRect(0, 0, W, H);
  const xs = series.flatMap((s) => s.x), ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  if (hline != null) ys.push(hline);
  let [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (W - 2 * pad);
  const py = (y) => H - pad + ((y0 - y) / (y1 - y0)) * (H - 2 * pad);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "12px sans-serif"; ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  for (const [v, x, y, align] of [
    [x0, px(x0), H - pad + 15, "left"], [x1, px(x1), H - pad + 15, "right"],
    [y0, pad - 4, py(y0), "right"], [y1, pad - 4, py(y1) + 10, "right"],
  ]) { ctx.textAlign = align; ctx.fillText(fmt(v, 3), x, y); }
  ctx.textAlign = "center"; ctx.fillText(xLabel, W / 2, H - 10);
  ctx.save(); ctx.translate(12, H / 2); ctx.rotate(-Math.PI / 2); ctx.fillText(yLabel, 0, 0); ctx.restore();

  ctx.setLineDash([4, 4]);
  if (hline != null) { ctx.beginPath(); ctx.moveTo(pad, py(hline)); ctx.lineTo(W - pad, py(hline)); ctx.stroke(); }
  if (vline != null) { ctx.beginPath(); ctx.moveTo(px(vline), pad); ctx.lineTo(px(vline), H - pad); ctx.stroke(); }
  ctx.setLineDash([]);

  ctx.save();
  ctx.beginPath(); ctx.rect(pad, pad, W - 2 * pad, H - 2 * pad); ctx.clip();
  for (const s of series) {
    ctx.strokeStyle = s.color; ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
    ctx.stroke();
  }
  ctx.restore();
}

function table(el, header, rows, rowClass = () => "") {
  el.innerHTML = "";
  const tr = el.insertRow();
  header.forEach((h) => { const th = document.createElement("th"); th.textContent = h; tr.append(th); });
  rows.forEach((r, i) => {
    const row = el.insertRow();
    row.className = rowClass(i);
    r.forEach((c) => (row.insertCell().textContent = c));
  });
}

function drawCurve() {
  const out = JSON.parse(bf_curve(num("se"), $("grid").value, num("zmax"), 301));
  const series = out.components.map((c, i) => ({ x: out.z, y: c.log_bf, color: COLORS[i % COLORS.length], width: 1 }));
  series.push({ x: out.z, y: out.averaged.log_bf, color: "#000", width: 2.5 });
  plot($("curve"), series, { xLabel: "z", yLabel: "log BF", hline: 0 });
  $("curve-legend").innerHTML = out.components
    .map((c, i) => `<span style="color:${COLORS[i % COLORS.length]}">omega ${c.omega}</span>`)
    .join("") + "<span><b>grid average</b></span>";
}

function runSimulation() {
  const out = JSON.parse(simulate(num("m"), num("pi0"), num("seed"), num("alpha"), num("gamma")));
  $("sim-info").textContent = `${out.m} tests, ${out.n_alternative} generated under the alternative.`;
  table($("sim-table"), ["method", "pi0 estimate", "rejections", "FDP", "FNP"],
    out.methods.map((m) => [m.method, fmt(m.pi0_hat), m.n_rejected, fmt(m.fdp, 3), fmt(m.fnp, 3)]));
  const t = out.trace;
  plot($("trace"), [{ x: t.rank, y: t.running_mean.map((v) => Math.log10(v)), color: "#d95f02", width: 2 }],
    { xLabel: "number of smallest Bayes factors", yLabel: "log10 running mean", hline: 0, vline: t.d0 || null });
}

function runAnalysis() {
  const out = JSON.parse(analyze($("bfs").value, num("a-alpha")));
  $("analyze-info").textContent =
    `pi0 estimate ${fmt(out.pi0_hat)} (stops after ${out.d0} factors), ${out.n_rejected} rejected, ` +
    `estimated BFDR ${fmt(out.estimated_bfdr, 3)}, threshold ${fmt(out.threshold)}` +
    (out.auto_rejected.length ? `, rejected outright: ${out.auto_rejected.join(", ")}` : "");
  table($("analyze-table"), ["id", "BF", "posterior", "rejected"],
    out.rows.map((r) => [r.id, fmt(r.bf), fmt(r.v_hat), r.rejected ? "yes" : ""]),
    (i) => (out.rows[i].rejected ? "rejected" : ""));
}

const bind = (form, errorId, f) =>
  $(form).addEventListener("submit", (e) => { e.preventDefault(); run(errorId, f); });

await init();
bind("curve-form", "curve-error", drawCurve);
bind("sim-form", "sim-error", runSimulation);
bind("analyze-form", "analyze-error", runAnalysis);
run("curve-error", drawCurve);
run("sim-error", runSimulation);
run("analyze-error", runAnalysis);
