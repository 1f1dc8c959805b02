import init, { registry, select, split_demo, convergence_demo } from "./pkg/fieldlab_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => {
  const v = $(id).value.trim();
  return v === "" ? null : Number(v);
};
const esc = (s) => String(s).replace(/[&<>"]/g, (c) => `&#${c.charCodeAt(0)};`);
const fail = (v) => `<p class="err">${esc(v.code)}: ${esc(v.message)}</p>`;
const badge = (tier) => `<span class="badge ${tier}">${tier}</span>`;

function renderModels() {
  const constraints = { task: "detection", num_classes: num("m-classes") ?? 1 };
  if (num("m-size") !== null) constraints.max_size_mb = num("m-size");
  if (num("m-ms") !== null) constraints.max_inference_ms = num("m-ms");
  if (num("m-map") !== null) constraints.min_map = num("m-map");
  const result = JSON.parse(select(JSON.stringify(constraints)));
  const feasible = new Set(result.feasible ?? []);
  const chosen = result.chosen?.name;
  const rows = JSON.parse(registry())
    .map((m) => {
      const cls = m.name === chosen ? "chosen" : feasible.has(m.name) ? "" : "out";
      return `<tr class="${cls}"><td>${esc(m.name)}</td><td>${m.inference_ms}</td><td>${m.map_coco}</td><td>${m.size_mb}</td><td>${m.class_capacity ?? "-"}</td></tr>`;
    })
    .join("");
  const head = result.code ? fail(result) : `<p>Selected: <b>${esc(chosen)}</b>${result.chosen.stability_note ? ` (${esc(result.chosen.stability_note)})` : ""}</p>`;
  $("m-out").innerHTML = `${head}<table><tr><th>model</th><th>ms</th><th>mAP</th><th>MB</th><th>classes</th></tr>${rows}</table>`;
}

function renderSplit() {
  const v = JSON.parse(split_demo(num("s-images") ?? 0, num("s-classes") ?? 1, $("s-ratio").value, num("s-seed") ?? 0));
  if (v.code) {
    $("s-out").innerHTML = fail(v);
    return;
  }
  const rows = Object.entries(v.stats.per_class_image_count)
    .map(([id, count]) => {
      const stratum = v.strata.find((s) => s.stratum.kind === "class" && String(s.stratum.class_id) === id);
      const parts = stratum ? `${stratum.train} / ${stratum.test} / ${stratum.eval}` : "-";
      return `<tr><td>class ${id}</td><td>${count}</td><td>${parts}</td><td>${badge(v.advice.per_class_tier[id])}</td></tr>`;
    })
    .join("");
  const notes = v.advice.notes.map((n) => `<li>${esc(n)}</li>`).join("");
  $("s-out").innerHTML =
    `<p>train ${v.sizes.train}, test ${v.sizes.test}, eval ${v.sizes.eval}; weakest class ${badge(v.weakest)}</p>` +
    `<table><tr><th>class</th><th>images</th><th>stratum train / test / eval</th><th>tier</th></tr>${rows}</table>` +
    (notes ? `<ul>${notes}</ul>` : "");
}

function drawCurve(canvas, curve, threshold, flip) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  if (curve.length === 0) return;
  const maxStep = curve[curve.length - 1].step;
  const maxLoss = Math.max(...curve.map((p) => p.loss), threshold) * 1.05;
  const x = (step) => 30 + ((w - 40) * step) / maxStep;
  const y = (loss) => h - 20 - ((h - 30) * loss) / maxLoss;

  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(30, 10);
  ctx.lineTo(30, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();

  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  curve.forEach((p, i) => (i ? ctx.lineTo(x(p.step), y(p.loss)) : ctx.moveTo(x(p.step), y(p.loss))));
  ctx.stroke();

  ctx.strokeStyle = "#b00020";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.moveTo(30, y(threshold));
  ctx.lineTo(w - 10, y(threshold));
  ctx.stroke();
  if (flip !== null) {
    ctx.strokeStyle = "#2e7d32";
    ctx.beginPath();
    ctx.moveTo(x(flip), 10);
    ctx.lineTo(x(flip), h - 20);
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#555";
  ctx.fillText(maxLoss.toFixed(2), 2, 14);
  ctx.fillText(String(maxStep), w - 40, h - 5);
}

function renderConvergence() {
  const threshold = num("c-threshold") ?? 0;
  const v = JSON.parse(
    convergence_demo(
      num("c-seed") ?? 0,
      600,
      num("c-plateau") ?? 0,
      num("c-rate") ?? 0,
      num("c-noise") ?? 0,
      threshold,
      num("c-window") ?? 0,
      num("c-patience") ?? 0,
    ),
  );
  if (v.code) {
    $("c-out").innerHTML = fail(v);
    drawCurve($("c-chart"), [], threshold, null);
    return;
  }
  $("c-out").textContent =
    v.converged_at === null ? `${v.decision}: never converges` : `${v.decision}: first converged at step ${v.converged_at}`;
  drawCurve($("c-chart"), v.curve, threshold, v.converged_at);
}

await init();
for (const [section, render] of [
  ["models", renderModels],
  ["split", renderSplit],
  ["convergence", renderConvergence],
]) {
  $(section).addEventListener("input", render);
  render();
}
