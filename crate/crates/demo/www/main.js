import init, { soft_contact_curve, project_onto_cone, label_scrape } from "./pkg/contact_field_demo.js";

const $ = (id) => document.getElementById(id);

function bindOutputs(ids, redraw) {
  for (const id of ids) {
    const input = $(id);
    const out = $(id + "-out");
    const sync = () => { if (out) out.textContent = input.value; };
    input.addEventListener("input", () => { sync(); redraw(); });
    sync();
  }
}

function fail(el, e) {
  el.innerHTML = `<span class="err">${e}</span>`;
}

// ---- soft contact curve

function drawCurve() {
  const cv = $("curve"), g = cv.getContext("2d");
  const max = 15;
  let data;
  try {
    data = JSON.parse(soft_contact_curve(+$("k").value, +$("half").value, max, 200));
  } catch (e) {
    return fail($("curve-stats"), e);
  }
  const pad = 30, w = cv.width - 2 * pad, h = cv.height - 2 * pad;
  const X = (d) => pad + (d / max) * w, Y = (c) => pad + (1 - c) * h;
  g.clearRect(0, 0, cv.width, cv.height);
  g.strokeStyle = "#bbb";
  g.strokeRect(pad, pad, w, h);
  g.setLineDash([4, 4]);
  g.beginPath(); g.moveTo(pad, Y(0.5)); g.lineTo(pad + w, Y(0.5));
  g.moveTo(X(+$("half").value), pad); g.lineTo(X(+$("half").value), pad + h); g.stroke();
  g.setLineDash([]);
  g.strokeStyle = "#1565c0"; g.lineWidth = 2;
  g.beginPath();
  data.depth_mm.forEach((d, i) => (i ? g.lineTo : g.moveTo).call(g, X(d), Y(data.prob[i])));
  g.stroke(); g.lineWidth = 1;
  g.fillStyle = "#444";
  g.fillText("clearance (mm)", pad + w - 80, cv.height - 8);
  g.fillText("1", 16, pad + 4); g.fillText("0", 16, pad + h);
  $("curve-stats").textContent = `length scale ${data.length_scale_mm.toFixed(4)} mm`;
}

// ---- cone projection

const cone = { t: 1.2, n: 0.4 };

function drawCone() {
  const cv = $("cone"), g = cv.getContext("2d");
  const s = 60, ox = cv.width / 2, oy = cv.height - 90;
  const P = ([t, n]) => [ox + t * s, oy - n * s];
  const r = JSON.parse(project_onto_cone(cone.t, cone.n));
  g.clearRect(0, 0, cv.width, cv.height);
  const reach = 4, k = Math.sqrt(3);
  g.fillStyle = "#e3f2fd";
  g.beginPath(); g.moveTo(...P([0, 0])); g.lineTo(...P([k * reach, reach])); g.lineTo(...P([-k * reach, reach])); g.fill();
  g.strokeStyle = "#999";
  g.beginPath(); g.moveTo(0, oy); g.lineTo(cv.width, oy); g.moveTo(ox, 0); g.lineTo(ox, cv.height); g.stroke();
  const [ax, ay] = P(r.input), [bx, by] = P(r.projected);
  g.setLineDash([3, 3]); g.strokeStyle = "#888";
  g.beginPath(); g.moveTo(ax, ay); g.lineTo(bx, by); g.stroke(); g.setLineDash([]);
  g.fillStyle = "#c62828"; g.beginPath(); g.arc(ax, ay, 5, 0, 7); g.fill();
  g.fillStyle = "#2e7d32"; g.beginPath(); g.arc(bx, by, 5, 0, 7); g.fill();
  $("cone-stats").innerHTML =
    `input (${r.input.map((v) => v.toFixed(3)).join(", ")})<br>` +
    `projected (${r.projected.map((v) => v.toFixed(3)).join(", ")})<br>` +
    `inside: ${r.inside}<br>distance ${r.distance.toFixed(4)}`;
  cone.toCanvas = P;
  cone.fromCanvas = (x, y) => [(x - ox) / s, (oy - y) / s];
}

function coneDrag(ev) {
  if (ev.type === "mousemove" && !(ev.buttons & 1)) return;
  const rect = $("cone").getBoundingClientRect();
  [cone.t, cone.n] = cone.fromCanvas(ev.clientX - rect.left, ev.clientY - rect.top);
  drawCone();
}

// ---- scraper labeling

function drawScrape() {
  const stats = $("scrape-stats");
  let v;
  try {
    v = JSON.parse(label_scrape(+$("force").value, +$("mu").value, +$("pnoise").value,
      +$("mnoise").value, 0.01, Math.max(0, +$("seed").value | 0), +$("frame").value));
  } catch (e) {
    return fail(stats, e);
  }
  $("frame").max = v.frames - 1;
  const cv = $("scrape"), g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const xs = v.points.map((p) => p.x), zs = v.points.map((p) => p.z);
  const cx = (Math.min(...xs) + Math.max(...xs)) / 2;
  const s = 2200, ox = cv.width / 2, oy = cv.height - 50;
  const X = (x) => ox + (x - cx) * s, Z = (z) => oy - (z - v.table_z) * s;
  g.fillStyle = "#d7ccc8"; g.fillRect(0, Z(v.table_z), cv.width, cv.height);
  const fmax = Math.max(1e-9, ...v.points.map((p) => Math.hypot(p.fx, p.fz)));
  for (const p of v.points) {
    const c = Math.round(255 * (1 - p.prob));
    g.fillStyle = `rgb(255,${c},${c})`;
    g.strokeStyle = p.truth ? "#000" : "#aaa";
    g.beginPath(); g.arc(X(p.x), Z(p.z), 4, 0, 7); g.fill(); g.stroke();
    const m = Math.hypot(p.fx, p.fz);
    if (m > 1e-6) {
      const L = 40 * m / fmax;
      g.strokeStyle = "#1565c0";
      g.beginPath(); g.moveTo(X(p.x), Z(p.z));
      g.lineTo(X(p.x) + (p.fx / m) * L, Z(p.z) - (p.fz / m) * L); g.stroke();
    }
  }
  stats.innerHTML =
    `frame ${v.frame}/${v.frames - 1} (${v.phase})<br>` +
    `F1 vs analytic contact set: ${v.f1.toFixed(3)}<br>` +
    `|W| ${v.wrench_norm.toFixed(4)}, residual ${v.wrench_residual.toExponential(2)}`;
}

await init();
bindOutputs(["k", "half"], drawCurve);
bindOutputs(["force", "mu", "pnoise", "mnoise", "frame"], drawScrape);
$("seed").addEventListener("input", drawScrape);
$("cone").addEventListener("mousedown", coneDrag);
$("cone").addEventListener("mousemove", coneDrag);
drawCurve();
drawCone();
drawScrape();
