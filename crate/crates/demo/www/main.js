import init, { rho_profile, ordering_race, convex_envelope } from "./pkg/shuffle_vr_demo.js";

const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

const num = (id) => Number(document.getElementById(id).value);

// Log-scale line plot of [{label, x: [], y: []}] on a canvas.
function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = { l: 60, r: 150, t: 10, b: 30 };
  ctx.clearRect(0, 0, W, H);
  const pts = series.flatMap((s) => s.y.filter((v) => v > 0));
  if (pts.length === 0) return;
  const xs = series.flatMap((s) => s.x);
  const x0 = Math.min(...xs), x1 = Math.max(...xs, x0 + 1);
  const lo = Math.floor(Math.log10(Math.min(...pts))), hi = Math.ceil(Math.log10(Math.max(...pts)));
  const top = hi === lo ? hi + 1 : hi;
  const px = (x) => pad.l + ((x - x0) / (x1 - x0)) * (W - pad.l - pad.r);
  const py = (y) => H - pad.b - ((Math.log10(y) - lo) / (top - lo)) * (H - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, H - pad.b);
  ctx.lineTo(W - pad.r, H - pad.b);
  ctx.stroke();
  const step = Math.max(1, Math.ceil((top - lo) / 8));
  for (let e = lo; e <= top; e += step) {
    ctx.fillText(`1e${e}`, 8, py(10 ** e) + 4);
  }
  ctx.fillText(String(x0), pad.l, H - 10);
  ctx.fillText(String(x1), W - pad.r - 20, H - 10);
  if (opts.xlabel) ctx.fillText(opts.xlabel, (W - pad.r) / 2, H - 10);

  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.setLineDash(s.dashed ? [5, 4] : []);
    ctx.beginPath();
    let started = false;
    s.x.forEach((x, i) => {
      if (!(s.y[i] > 0)) return;
      if (started) ctx.lineTo(px(x), py(s.y[i]));
      else ctx.moveTo(px(x), py(s.y[i]));
      started = true;
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, W - pad.r + 10, pad.t + 14 * (k + 1));
  });
}

function guarded(button, canvas, f) {
  document.getElementById(button).addEventListener("click", () => {
    try {
      f();
    } catch (e) {
      const c = document.getElementById(canvas).getContext("2d");
      c.clearRect(0, 0, c.canvas.width, c.canvas.height);
      c.fillStyle = "#b00";
      c.fillText(String(e.message ?? e), 20, 30);
    }
  });
}

await init();

guarded("rho-go", "rho-plot", () => {
  const r = JSON.parse(rho_profile(num("rho-n"), num("rho-d"), num("rho-beta"), num("rho-seed")));
  document.getElementById("rho-out").textContent =
    `rho = ${r.rho.toPrecision(6)}   planted = ${r.rho_planted.toPrecision(6)}   1/n = ${r.one_over_n.toPrecision(6)}`;
  plot(document.getElementById("rho-plot"), [
    { label: "score", x: r.scores.map((_, i) => i + 1), y: r.scores },
  ], { xlabel: "index" });
});

guarded("race-go", "race-plot", () => {
  const r = JSON.parse(ordering_race(num("race-n"), 10, num("race-beta"), num("race-theta"), num("race-epochs"), num("race-seed")));
  plot(document.getElementById("race-plot"), r.series.map((s) => ({ label: s.label, x: s.epoch, y: s.value })),
    { xlabel: "epoch" });
});

guarded("env-go", "env-plot", () => {
  const r = JSON.parse(convex_envelope(num("env-n"), 10, num("env-theta"), num("env-epochs"), num("env-seed")));
  plot(document.getElementById("env-plot"), [
    { label: "residual", x: r.residual.epoch, y: r.residual.value },
    { label: "envelope", x: r.bound.epoch, y: r.bound.value, dashed: true },
  ], { xlabel: "epoch" });
});

for (const id of ["rho-go", "race-go", "env-go"]) document.getElementById(id).click();
