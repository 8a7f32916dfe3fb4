import init, { synthesize_gate, simulate_populations, error_grid } from "./pkg/qgate_web.js";

const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
const $ = (id) => document.getElementById(id);
let current = null;

function legend(el, names) {
  el.innerHTML = names
    .map((n, i) => `<span style="color:${COLORS[i]}">■ ${n}</span>`)
    .join("");
}

function plotLines(canvas, xs, series, lo, hi) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#eee";
  ctx.beginPath();
  ctx.moveTo(0, h / 2);
  ctx.lineTo(w, h / 2);
  ctx.stroke();
  const x = (v) => (v / xs[xs.length - 1]) * (w - 10) + 5;
  const y = (v) => h - 5 - ((v - lo) / (hi - lo)) * (h - 10);
  series.forEach((ys, c) => {
    ctx.strokeStyle = COLORS[c];
    ctx.beginPath();
    ys.forEach((v, i) => (i ? ctx.lineTo(x(xs[i]), y(v)) : ctx.moveTo(x(xs[i]), y(v))));
    ctx.stroke();
  });
}

function drawPulse() {
  const { pulse, dt } = current;
  const steps = pulse.length / 4;
  const ts = [];
  const chans = [[], [], [], []];
  for (let k = 0; k < steps; k++) {
    // piecewise constant: two points per step
    for (const t of [k * dt, (k + 1) * dt]) {
      ts.push(t);
      for (let c = 0; c < 4; c++) chans[c].push(pulse[4 * k + c]);
    }
  }
  plotLines($("pulse"), ts, chans, -10, 10);
}

function drawPopulations() {
  if (!current) return;
  const alpha = Number($("alpha").value);
  const beta = Number($("beta").value);
  $("ab").textContent = `α = ${alpha.toFixed(2)}, β = ${beta.toFixed(2)}`;
  const rows = simulate_populations($("gate").value, current.pulse, alpha, beta);
  const ts = [];
  const pops = [[], [], [], []];
  for (let i = 0; i < rows.length; i += 5) {
    ts.push(rows[i]);
    for (let c = 0; c < 4; c++) pops[c].push(rows[i + 1 + c]);
  }
  plotLines($("populations"), ts, pops, 0, 1);
}

function drawGrid(errors, n) {
  const canvas = $("grid");
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / n;
  const logs = Array.from(errors, (e) => Math.log10(Math.max(e, 1e-8)));
  const lo = Math.min(...logs);
  const hi = Math.max(...logs);
  logs.forEach((v, idx) => {
    const i = Math.floor(idx / n);
    const j = idx % n;
    const s = hi > lo ? (v - lo) / (hi - lo) : 0;
    ctx.fillStyle = `rgb(${Math.round(255 * s)}, ${Math.round(80 + 100 * (1 - s))}, ${Math.round(255 * (1 - s))})`;
    ctx.fillRect(j * cell, i * cell, cell, cell);
  });
  $("grid-status").textContent =
    `max ${Math.max(...errors).toExponential(2)}, min ${Math.min(...errors).toExponential(2)}`;
}

async function main() {
  await init();
  legend($("pulse-legend"), ["u1x", "u1y", "u2x", "u2y"]);
  legend($("pop-legend"), ["p00", "p01", "p10", "p11"]);

  $("run").addEventListener("click", () => {
    $("status").textContent = "running…";
    // let the status repaint before the blocking call
    setTimeout(() => {
      try {
        current = JSON.parse(
          synthesize_gate($("gate").value, Number($("iterations").value), Number($("seed").value)),
        );
        const errs = current.acceptedErrors;
        $("status").textContent =
          `${current.iterations} iterations, expansion error ${errs[0].toExponential(2)} → ` +
          `${current.finalError.toExponential(2)}${current.stagnated ? " (stagnated)" : ""}`;
        $("grid-run").disabled = false;
        drawPulse();
        drawPopulations();
      } catch (e) {
        $("status").textContent = `error: ${e.message ?? e}`;
      }
    }, 20);
  });

  $("alpha").addEventListener("input", drawPopulations);
  $("beta").addEventListener("input", drawPopulations);

  $("grid-run").addEventListener("click", () => {
    $("grid-status").textContent = "evaluating…";
    setTimeout(() => {
      const n = 15;
      drawGrid(error_grid($("gate").value, current.pulse, n), n);
    }, 20);
  });
}

main();
