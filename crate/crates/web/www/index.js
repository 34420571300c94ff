import init, { demo_signal, spectrogram_db, wiener_panning, blend_sdr_curve } from "./pkg/stemfuse_web.js";

const $ = (id) => document.getElementById(id);

function colour(t) {
  // dark blue to yellow
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.5 * t - 0.2)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.2 * t)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 0.6 - 0.6 * t + 0.4 * (1 - t))));
  return [r, g, b];
}

function drawSpectrogram() {
  const fft = Number($("fft").value);
  const hop = fft / Number($("hopdiv").value);
  const rate = 16000;
  const signal = demo_signal(2.0, rate, Number($("specseed").value) >>> 0);
  const map = spectrogram_db(signal, rate, fft, hop);
  const data = map.data();
  const { frames, bins } = map;
  map.free();
  const canvas = $("spec");
  canvas.width = frames;
  canvas.height = bins;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(frames, bins);
  const top = Math.max(...data);
  const bottom = top - 80;
  for (let t = 0; t < frames; t++) {
    for (let k = 0; k < bins; k++) {
      const v = (data[t * bins + k] - bottom) / (top - bottom);
      const [r, g, b] = colour(Math.min(1, Math.max(0, v)));
      const o = ((bins - 1 - k) * frames + t) * 4;
      img.data[o] = r; img.data[o + 1] = g; img.data[o + 2] = b; img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
  canvas.style.width = "640px";
  canvas.style.height = "256px";
}

function drawPanning() {
  const a = Number($("pana").value), b = Number($("panb").value), c = Number($("conf").value);
  $("panav").textContent = a.toFixed(2);
  $("panbv").textContent = b.toFixed(2);
  $("confv").textContent = c.toFixed(2);
  const [la, lb, ea, eb] = wiener_panning(a, b, c, Number($("iters").value) >>> 0, 11);
  const rows = [
    ["A left share", la, `${(100 * la).toFixed(1)} %`],
    ["B left share", lb, `${(100 * lb).toFixed(1)} %`],
    ["A error", Math.min(1, Math.max(0, -ea / 40)), `${ea.toFixed(1)} dB`],
    ["B error", Math.min(1, Math.max(0, -eb / 40)), `${eb.toFixed(1)} dB`],
  ];
  $("panbars").innerHTML = rows
    .map(([name, v, text]) => `<span>${name}</span><div class="bar" style="width:${(100 * v).toFixed(1)}%"></div><span>${text}</span>`)
    .join("");
}

function drawCurve() {
  const shared = Number($("shared").value), resid = Number($("resid").value);
  $("sharedv").textContent = shared.toFixed(2);
  $("residv").textContent = resid.toFixed(3);
  const steps = 20;
  const sdr = Array.from(blend_sdr_curve(shared, resid, steps, 5));
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 36;
  ctx.clearRect(0, 0, w, h);
  const lo = Math.floor(Math.min(...sdr) / 5) * 5;
  const hi = Math.ceil(Math.max(...sdr) / 5) * 5 || lo + 5;
  const x = (i) => pad + (i / steps) * (w - 2 * pad);
  const y = (v) => h - pad - ((v - lo) / (hi - lo || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(`${hi} dB`, 2, pad + 4);
  ctx.fillText(`${lo} dB`, 2, h - pad + 4);
  ctx.fillText("weight on model A: 0", pad, h - 10);
  ctx.fillText("1", w - pad - 4, h - 10);
  ctx.strokeStyle = "#4a7bd0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  sdr.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
}

function guard(f) {
  return () => {
    try {
      f();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

await init();
for (const id of ["fft", "hopdiv", "specseed"]) $(id).addEventListener("change", guard(drawSpectrogram));
for (const id of ["pana", "panb", "conf", "iters"]) $(id).addEventListener("input", guard(drawPanning));
for (const id of ["shared", "resid"]) $(id).addEventListener("input", guard(drawCurve));
guard(drawSpectrogram)();
guard(drawPanning)();
guard(drawCurve)();
