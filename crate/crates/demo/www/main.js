import init, { preview_selection, cluster_balance, train_and_sample } from "./pkg/diffprune_demo.js";

const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

function field(section, name) {
  const el = section.querySelector(`[name=${name}]`);
  return el.type === "number" ? Number(el.value) : el.value;
}

function bounds(sets) {
  let lo = Infinity, hi = -Infinity;
  for (const pts of sets) for (const [x, y] of pts) {
    lo = Math.min(lo, x, y);
    hi = Math.max(hi, x, y);
  }
  const pad = 0.05 * (hi - lo || 1);
  return [lo - pad, hi + pad];
}

// Scatter `layers` ([{points, color(i), radius}]) on a square canvas.
function scatter(canvas, layers) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const [lo, hi] = bounds(layers.map((l) => l.points));
  const sx = (v) => ((v - lo) / (hi - lo)) * canvas.width;
  const sy = (v) => canvas.height - ((v - lo) / (hi - lo)) * canvas.height;
  for (const layer of layers) {
    layer.points.forEach(([x, y], i) => {
      ctx.fillStyle = layer.color(i);
      ctx.beginPath();
      ctx.arc(sx(x), sy(y), layer.radius, 0, 2 * Math.PI);
      ctx.fill();
    });
  }
}

// Grouped bars: one group per cluster, one bar per series.
function bars(canvas, series) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const groups = series[0].values.length;
  const max = Math.max(...series.flatMap((s) => s.values));
  const gw = canvas.width / groups;
  const bw = (gw * 0.8) / series.length;
  ctx.font = "12px sans-serif";
  series.forEach((s, j) => {
    ctx.fillStyle = s.color;
    s.values.forEach((v, g) => {
      const h = (v / max) * (canvas.height - 40);
      ctx.fillRect(g * gw + 0.1 * gw + j * bw, canvas.height - 20 - h, bw - 2, h);
    });
    ctx.fillText(s.name, 8, 14 + 14 * j);
  });
  ctx.fillStyle = "#222";
  for (let g = 0; g < groups; g++) ctx.fillText(`cluster ${g}`, g * gw + 0.3 * gw, canvas.height - 5);
}

function line(canvas, values) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = Math.min(...values), hi = Math.max(...values);
  ctx.strokeStyle = "#1f77b4";
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / Math.max(values.length - 1, 1)) * (canvas.width - 20) + 10;
    const y = canvas.height - 10 - ((v - lo) / (hi - lo || 1)) * (canvas.height - 30);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`training loss ${hi.toFixed(3)} → ${values[values.length - 1].toFixed(3)}`, 10, 14);
}

function wire(id, run) {
  const section = document.getElementById(id);
  const out = section.querySelector(".out");
  section.querySelector("button").addEventListener("click", () => {
    out.className = "out";
    out.textContent = "working…";
    // let the status text paint before the synchronous computation starts
    setTimeout(() => {
      try {
        run(section, out);
      } catch (e) {
        out.className = "out error";
        out.textContent = String(e.message ?? e);
      }
    }, 20);
  });
}

await init();

wire("preview", (s, out) => {
  const doc = JSON.parse(preview_selection(field(s, "dataset"), field(s, "n"), field(s, "method"),
    field(s, "direction"), field(s, "policy"), field(s, "pr"), field(s, "seed")));
  const color = (i) => {
    if (!doc.kept[i]) return "#ddd";
    return doc.cluster ? PALETTE[doc.cluster[i] % PALETTE.length] : "#1f77b4";
  };
  scatter(s.querySelector("canvas"), [{ points: doc.points, color, radius: 2 }]);
  out.textContent = `kept ${doc.kept_count} of ${doc.points.length} (pruning ratio ${doc.pruning_ratio.toFixed(3)}); grey = pruned`;
});

wire("balance", (s, out) => {
  const doc = JSON.parse(cluster_balance(field(s, "n"), field(s, "pr"), field(s, "seed")));
  const [scatterCanvas, barCanvas] = s.querySelectorAll("canvas");
  scatter(scatterCanvas, [{ points: doc.points, color: (i) => PALETTE[doc.cluster[i]], radius: 2 }]);
  bars(barCanvas, [
    { name: "full data", values: doc.train, color: "#bbb" },
    { name: `proportional (PR ${doc.proportional_pr.toFixed(2)})`, values: doc.proportional, color: "#1f77b4" },
    { name: `balanced (PR ${doc.balanced_pr.toFixed(2)})`, values: doc.balanced, color: "#d62728" },
  ]);
  out.textContent = `per-cluster counts\nfull         ${doc.train.join("  ")}\nproportional ${doc.proportional.join("  ")}\nbalanced     ${doc.balanced.join("  ")}`;
});

wire("train", (s, out) => {
  const doc = JSON.parse(train_and_sample(field(s, "dataset"), field(s, "n"), field(s, "method"),
    field(s, "direction"), field(s, "pr"), field(s, "steps"), field(s, "n_gen"), field(s, "seed")));
  const [scatterCanvas, lossCanvas] = s.querySelectorAll("canvas");
  scatter(scatterCanvas, [
    { points: doc.train, color: () => "#bbb", radius: 2 },
    { points: doc.samples, color: () => "rgba(214, 39, 40, 0.6)", radius: 1.5 },
  ]);
  line(lossCanvas, doc.loss_curve);
  const m = doc.metrics;
  out.textContent = `trained on ${doc.kept_count} samples (grey); generated samples in red\n` +
    `FID ${m.fid.toFixed(4)}  precision ${m.precision.toFixed(3)}  recall ${m.recall.toFixed(3)}  ` +
    `Vendi ${m.vendi.toFixed(3)}  memorization ${m.memorization.toFixed(4)}`;
});
