import init, { label_script, optimize_trace, objective_landscape } from "./pkg/tap_demo.js";

const $ = (id) => document.getElementById(id);
const NS = "http://www.w3.org/2000/svg";
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

const EXAMPLE = {
  primitives: [
    { lateral: "Straight", longitudinal: "MaintainSlowSpeed", duration_s: 1.5 },
    { lateral: "MediumLeftTurn", longitudinal: "MaintainSlowSpeed", duration_s: 1.5 },
    { lateral: "Straight", longitudinal: "AccelerateSlowSpeed", duration_s: 2 },
    { lateral: "MediumRightTurn", longitudinal: "AccelerateMediumSpeed", duration_s: 1.5 },
    { lateral: "Straight", longitudinal: "DecelerateMediumSpeed", duration_s: 3 },
    { lateral: "Straight", longitudinal: "Stopped", duration_s: 2 },
  ],
};

function call(fn, request) {
  const out = JSON.parse(fn(JSON.stringify(request)));
  $("error").textContent = out.error ?? "";
  return out.error ? null : out;
}

function el(tag, attrs = {}, parent = null) {
  const node = document.createElementNS(NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (parent) parent.appendChild(node);
  return node;
}

function extent(values) {
  let lo = Math.min(...values), hi = Math.max(...values);
  if (hi - lo < 1e-9) hi = lo + 1;
  return [lo, hi];
}

// line chart with optional horizontal guide lines
function lineChart(series, { width = 900, height = 120, guides = [], title = "" } = {}) {
  const svg = el("svg", { width, height });
  const xs = series[0].x;
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(series.flatMap((s) => s.y).concat(guides));
  const px = (x) => 40 + ((width - 50) * (x - x0)) / (x1 - x0);
  const py = (y) => height - 15 - ((height - 30) * (y - y0)) / (y1 - y0);
  for (const g of guides) el("line", { x1: 40, x2: width - 10, y1: py(g), y2: py(g), stroke: "#bbb", "stroke-dasharray": "4 3" }, svg);
  series.forEach((s, i) => {
    const points = s.x.map((x, k) => `${px(x).toFixed(1)},${py(s.y[k]).toFixed(1)}`).join(" ");
    el("polyline", { points, fill: "none", stroke: s.color ?? COLORS[i % COLORS.length], "stroke-width": s.width ?? 1.5 }, svg);
  });
  el("text", { x: 44, y: 12, "font-size": 11 }, svg).textContent = title;
  el("text", { x: 2, y: py(y1) + 8, "font-size": 9 }, svg).textContent = y1.toFixed(3);
  el("text", { x: 2, y: py(y0), "font-size": 9 }, svg).textContent = y0.toFixed(3);
  return svg;
}

function labelBar(segments, end, y, svg, width) {
  const scale = (width - 50) / end;
  segments.forEach((s, i) => {
    const g = el("g", { class: "bar" }, svg);
    el("rect", { x: 40 + s.start_s * scale, y, width: (s.end_s - s.start_s) * scale, height: 18, fill: COLORS[i % COLORS.length], opacity: 0.35 }, g);
    el("text", { x: 43 + s.start_s * scale, y: y + 13 }, g).textContent = s.label;
  });
}

function runLabel() {
  let script;
  try {
    script = JSON.parse($("script").value);
  } catch (e) {
    $("error").textContent = `script is not valid JSON: ${e.message}`;
    return;
  }
  script.noise_fraction = Number($("noise").value);
  script.seed = Number($("label-seed").value);
  const out = call(label_script, script);
  if (!out) return;
  const th = out.thresholds;
  const channels = $("channels");
  channels.replaceChildren(
    lineChart([{ x: out.t, y: out.omega }], { title: "yaw rate (rad/s)", guides: [th.omega[0], -th.omega[0], th.omega[1], -th.omega[1], th.omega[2], -th.omega[2]] }),
    lineChart([{ x: out.t, y: out.a }], { title: "acceleration (m/s²)", guides: th.accel }),
    lineChart([{ x: out.t, y: out.v }], { title: "speed (m/s)", guides: th.velocity }),
  );
  const levels = $("levels");
  levels.replaceChildren();
  const rate = out.t.length > 1 ? 1 / (out.t[1] - out.t[0]) : 10;
  const end = out.t.length / rate;
  for (const name of ["trace", "trend", "maneuver", "action"]) {
    const lvl = out.levels[name];
    const head = document.createElement("p");
    head.innerHTML = `<b>${name}</b> <span class="${lvl.matches_script ? "ok" : "bad"}">${lvl.matches_script ? "matches the script" : "differs from the script"}</span>`;
    const svg = el("svg", { width: 900, height: 46 });
    labelBar(lvl.labels.lateral, end, 2, svg, 900);
    labelBar(lvl.labels.longitudinal, end, 24, svg, 900);
    levels.append(head, svg);
  }
}

function histogram(samples, thresholds, width = 420, height = 220) {
  const svg = el("svg", { width, height });
  const [lo, hi] = extent(samples);
  const bins = 40;
  const counts = new Array(bins).fill(0);
  for (const s of samples) counts[Math.min(bins - 1, Math.floor(((s - lo) / (hi - lo)) * bins))] += 1;
  const top = Math.max(...counts);
  const bw = (width - 20) / bins;
  counts.forEach((c, i) => el("rect", { x: 10 + i * bw, y: height - 20 - ((height - 40) * c) / top, width: bw - 1, height: ((height - 40) * c) / top, fill: "#9bb" }, svg));
  for (const t of thresholds) {
    const x = 10 + ((width - 20) * (t - lo)) / (hi - lo);
    el("line", { x1: x, x2: x, y1: 10, y2: height - 20, stroke: "#b22", "stroke-width": 2 }, svg);
  }
  el("text", { x: 10, y: height - 5, "font-size": 10 }, svg).textContent = `${lo.toFixed(2)} … ${hi.toFixed(2)}`;
  return svg;
}

function runOptimize() {
  const out = call(optimize_trace, {
    channel: $("channel").value,
    trajectories: Number($("opt-n").value),
    descent_only: $("descent").checked,
  });
  if (!out) return;
  $("opt-summary").textContent =
    `thresholds ${out.thresholds.map((t) => t.toFixed(4)).join(", ")}; J = ${out.objective.toExponential(3)}; ε = ${out.epsilon.toFixed(4)}; best seed ${out.best}`;
  const series = out.runs.map((r, i) => ({ x: r.objective.map((_, k) => k), y: r.objective, width: i === out.best ? 3 : 1.2 }));
  $("opt-trace").replaceChildren(lineChart(series, { width: 500, height: 220, title: "J per epoch, one line per seed" }));
  $("opt-hist").replaceChildren(histogram(out.samples, out.thresholds));
}

let landscape = null;

function runLandscape() {
  landscape = call(objective_landscape, { steps: 90 });
  if (!landscape) return;
  const canvas = $("heat");
  const ctx = canvas.getContext("2d");
  const n = landscape.axis.length;
  const cell = canvas.width / n;
  const values = landscape.objective.flat().filter((v) => v !== null);
  const lo = Math.min(...values), hi = Math.max(...values);
  ctx.fillStyle = "#eee";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  landscape.objective.forEach((row, i) =>
    row.forEach((v, j) => {
      if (v === null) return;
      // log scale keeps the low basin visible
      const f = Math.log1p(v - lo) / Math.log1p(hi - lo);
      const shade = Math.round(255 * (1 - f));
      ctx.fillStyle = `rgb(${shade}, ${Math.round(shade * 0.85)}, 80)`;
      ctx.fillRect(j * cell, canvas.height - (i + 1) * cell, cell + 0.5, cell + 0.5);
    }),
  );
}

function pickCell(event) {
  if (!landscape) return;
  const canvas = $("heat");
  const rect = canvas.getBoundingClientRect();
  const n = landscape.axis.length;
  const j = Math.floor(((event.clientX - rect.left) / rect.width) * n);
  const i = n - 1 - Math.floor(((event.clientY - rect.top) / rect.height) * n);
  const v = landscape.objective[i]?.[j];
  $("cell").textContent = v == null
    ? "infeasible: deceleration threshold must be below acceleration threshold"
    : `θ_dec = ${landscape.axis[i].toFixed(3)}, θ_acc = ${landscape.axis[j].toFixed(3)}, J = ${v.toExponential(4)}`;
}

await init();
$("script").value = JSON.stringify(EXAMPLE, null, 2);
$("noise").addEventListener("input", () => ($("noise-value").textContent = $("noise").value));
$("label").addEventListener("click", runLabel);
$("optimize").addEventListener("click", runOptimize);
$("landscape").addEventListener("click", runLandscape);
$("heat").addEventListener("click", pickCell);
runLabel();
