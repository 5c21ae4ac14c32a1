import init, { psf_preview, simulate_frame, blink_localize } from "./pkg/qdsr_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function draw(canvas, values, size, marks = []) {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const span = hi > lo ? hi - lo : 1;
  const img = ctx.createImageData(size, size);
  values.forEach((v, i) => {
    const g = Math.round(255 * (v - lo) / span);
    img.data.set([g, g, g, 255], 4 * i);
  });
  ctx.putImageData(img, 0, 0);
  for (const [x, y, color] of marks) {
    if (!Number.isFinite(x)) continue;
    ctx.fillStyle = color;
    ctx.fillRect(x, y, 1, 1);
  }
}

function guard(out, f) {
  try { f(); } catch (e) { $(out).textContent = `error: ${e}`; }
}

$("psf-run").onclick = () => guard("psf-out", () => {
  const p = psf_preview($("psf-kind").value, num("psf-fwhm"), num("psf-squeeze"), num("psf-angle"));
  draw($("psf-canvas"), p.values, p.size);
  const zero = Number.isNaN(p.first_zero) ? "" : `\nfirst dark ring  ${p.first_zero.toFixed(2)} px`;
  $("psf-out").textContent =
    `support          ${p.size} px\nmeasured FWHM    ${p.measured_fwhm.toFixed(2)} px\nanisotropy       ${p.anisotropy.toFixed(3)}` + zero;
});

$("sim-run").onclick = () => guard("sim-out", () => {
  const s = simulate_frame(num("sim-seed"), num("sim-size"), num("sim-n"), $("sim-kind").value,
    num("sim-fwhm"), num("sim-photons"), num("sim-bg"));
  const marks = [];
  s.truth_x.forEach((x, i) => marks.push([x, s.truth_y[i], "lime"]));
  s.fit_x.forEach((x, i) => marks.push([x, s.fit_y[i], "red"]));
  draw($("sim-canvas"), s.frame, s.lo_size, marks);
  const rows = s.fit_x.map((x, i) => `  (${x.toFixed(2)}, ${s.fit_y[i].toFixed(2)})`).join("\n");
  $("sim-out").textContent = `truth green, fits red\n${s.fit_x.length} fits:\n${rows}`;
});

$("blink-run").onclick = () => guard("blink-out", () => {
  const b = blink_localize(num("blink-seed"), num("blink-size"), num("blink-n"), $("blink-kind").value,
    num("blink-fwhm"), num("blink-photons"), num("blink-bg"));
  const marks = [[b.removed_x, b.removed_y, "lime"], [b.found_x, b.found_y, "red"]];
  draw($("blink-before"), b.before, b.lo_size);
  draw($("blink-after"), b.after, b.lo_size);
  draw($("blink-detect"), b.detection, b.lo_size, marks);
  $("blink-out").textContent =
    `removed (${b.removed_x.toFixed(2)}, ${b.removed_y.toFixed(2)})\nfound   (${b.found_x.toFixed(2)}, ${b.found_y.toFixed(2)})\n${b.message}`;
});

await init();
