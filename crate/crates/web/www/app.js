import init, { populationTemplate, predictSubject, trainingCurve } from "./pkg/netevo_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function population() {
  return {
    seed: num("seed"),
    n_subjects: num("n_subjects"),
    n_rois: num("n_rois"),
    n_clusters: num("n_clusters"),
    within_cluster_noise: num("within_cluster_noise"),
    drift_scale: num("drift_scale"),
  };
}

// white -> dark blue
function sequential(t) {
  const c = (a, b) => Math.round(a + (b - a) * t);
  return `rgb(${c(255, 8)},${c(255, 48)},${c(255, 107)})`;
}

const PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

function heatmap(canvas, rows, { max, categorical = false } = {}) {
  const n = rows.length;
  const cell = Math.max(2, Math.floor(240 / n));
  canvas.width = canvas.height = n * cell;
  const ctx = canvas.getContext("2d");
  const top = max ?? Math.max(...rows.flat(), 1e-12);
  rows.forEach((row, a) =>
    row.forEach((v, b) => {
      ctx.fillStyle = categorical
        ? (a === b ? "#fff" : PALETTE[v % PALETTE.length])
        : sequential(Math.min(v / top, 1));
      ctx.fillRect(b * cell, a * cell, cell, cell);
    }),
  );
}

function lineChart(canvas, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.values);
  const lo = Math.min(...all), hi = Math.max(...all);
  const span = hi - lo || 1;
  const n = Math.max(...series.map((s) => s.values.length));
  const x = (i) => pad + ((w - 2 * pad) * i) / Math.max(n - 1, 1);
  const y = (v) => h - pad - ((h - 2 * pad) * (v - lo)) / span;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(4), 2, pad);
  ctx.fillText(lo.toPrecision(4), 2, h - pad);
  series.forEach((s, k) => {
    ctx.strokeStyle = PALETTE[k];
    ctx.beginPath();
    s.values.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    ctx.stroke();
    ctx.fillStyle = PALETTE[k];
    ctx.fillText(s.name, pad + 8 + k * 120, pad - 8);
  });
}

function guarded(outId, f) {
  return () => {
    const out = $(outId);
    out.classList.remove("error");
    out.textContent = "working...";
    // let the browser paint the message before the synchronous wasm call
    setTimeout(() => {
      try {
        f(out);
      } catch (e) {
        out.classList.add("error");
        out.textContent = String(e.message ?? e);
      }
    }, 10);
  };
}

function showTemplate(out) {
  const r = JSON.parse(populationTemplate(JSON.stringify(population())));
  const max = Math.max(...r.template.flat(), ...r.example.flat());
  heatmap($("template"), r.template, { max });
  heatmap($("chosen"), r.chosen_subject, { categorical: true });
  heatmap($("example"), r.example, { max });
  const used = new Set(r.chosen_subject.flatMap((row, a) => row.filter((_, b) => a !== b)));
  out.textContent = `${r.subject_ids.length} subjects, ${r.template.length} regions; ` +
    `${used.size} subjects contribute edges to the template`;
}

function showPrediction(out) {
  const request = { ...population(), subject: num("subject"), method: $("method").value, k: num("k") };
  const r = JSON.parse(predictSubject(JSON.stringify(request)));
  const max = Math.max(...r.truth.flat(), ...r.predicted.flat());
  heatmap($("truth"), r.truth, { max });
  heatmap($("predicted"), r.predicted, { max });
  heatmap($("residual"), r.truth.map((row, a) => row.map((v, b) => Math.abs(v - r.predicted[a][b]))), { max });
  const same = r.neighbors.filter((n) => n.cluster === r.cluster).length;
  out.textContent =
    `${r.subject} (cluster ${r.cluster}) at ${r.timepoint} with ${r.method}, K=${r.k}\n` +
    `MAD ${r.mad.toFixed(4)}  MSE ${r.mse.toFixed(4)}  same-cluster neighbors ${same}/${r.neighbors.length}\n` +
    r.neighbors.map((n) => `  ${n.subject}  cluster ${n.cluster}  score ${n.score.toPrecision(5)}`).join("\n");
}

function showTraining(out) {
  const request = {
    ...population(),
    subject: num("train-subject"),
    train: {
      learning_rate_encoder: num("lr"),
      learning_rate_discriminator: num("lr"),
      iterations: num("iterations"),
      noise_sigma: num("sigma"),
      adversarial_weight: num("adv"),
      seed: num("seed"),
    },
  };
  const r = JSON.parse(trainingCurve(JSON.stringify(request)));
  lineChart($("curve"), [
    { name: "reconstruction", values: r.history.map((h) => h.reconstruction) },
    { name: "generator", values: r.history.map((h) => h.generator) },
    { name: "discriminator", values: r.history.map((h) => h.discriminator) },
  ]);
  out.textContent = `${r.subject}: noise-free reconstruction loss ` +
    `${r.initial_reconstruction.toPrecision(7)} -> ${r.final_reconstruction.toPrecision(7)}`;
}

await init();
$("run-template").onclick = guarded("template-out", showTemplate);
$("run-predict").onclick = guarded("predict-out", showPrediction);
$("run-train").onclick = guarded("train-out", showTraining);
$("run-template").click();
