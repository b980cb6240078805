// Built by `wasm-bindgen --target web --out-dir www/pkg`; see the README.
import init, { simulate_channels, commit_and_disclose, aid_id } from "./pkg/vet_web.js";

const $ = (id) => document.getElementById(id);

function show(el, fn) {
  el.classList.remove("err");
  try {
    el.textContent = fn();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e);
  }
}

function drawChart(curves) {
  const svg = $("chart");
  const w = svg.width.baseVal.value, h = svg.height.baseVal.value, pad = 30;
  const n = Math.max(...curves.map((c) => c.latencies.length));
  const top = Math.max(...curves.flatMap((c) => c.latencies)) * 1.1;
  const x = (i) => pad + (i / Math.max(n - 1, 1)) * (w - 2 * pad);
  const y = (v) => h - pad - (v / top) * (h - 2 * pad);
  let out = `<line x1="${pad}" y1="${h - pad}" x2="${w - pad}" y2="${h - pad}" stroke="#999"/>`;
  out += `<text x="4" y="${pad - 8}" font-size="11">${top.toFixed(1)} s</text>`;
  for (const c of curves) {
    const pts = c.latencies.map((v, i) => `${x(i)},${y(v)}`).join(" ");
    out += `<polyline class="${c.strategy}" fill="none" stroke-width="2" points="${pts}"/>`;
  }
  out += `<text x="${w - 150}" y="18" font-size="12" fill="#c44">naive</text>`;
  out += `<text x="${w - 90}" y="18" font-size="12" fill="#36c">optimized</text>`;
  svg.innerHTML = out;
}

function runSim() {
  show($("sim-out"), () => {
    const r = JSON.parse(simulate_channels(Number($("rounds").value), Number($("unit").value)));
    drawChart(r.curves);
    return r.curves
      .map((c) => {
        const mean = c.latencies.reduce((a, b) => a + b, 0) / c.latencies.length;
        const status = c.feasible ? "feasible under the 64 KiB cap" : `infeasible: ${c.note}`;
        return `${c.strategy}: ${c.channels} channel(s), ${c.setup.toFixed(2)} s setup, mean ${mean.toFixed(2)} s per round, ${status}`;
      })
      .join("\n");
  });
}

function runCommit() {
  show($("commit-out"), () => {
    const r = JSON.parse(
      commit_and_disclose($("transcript").value, Number($("chunk").value), $("ranges").value, Number($("seed").value)),
    );
    return [
      `root      ${r.root}`,
      `leaves    ${r.leaves}, revealed ${r.revealed_chunks.join(" ") || "none"}, ${r.proof_nodes} proof nodes`,
      `verified  ${r.verified}`,
      `size      ${r.disclosure_bytes} bytes of disclosure JSON`,
      "",
      r.view,
    ].join("\n");
  });
}

function runAid() {
  show($("aid-out"), () => {
    const r = JSON.parse(aid_id($("aid").value));
    return [r.id, ...r.violations].join("\n");
  });
}

await init();
$("run-sim").onclick = runSim;
$("run-commit").onclick = runCommit;
$("run-aid").onclick = runAid;
$("aid").value = await fetch("example-aid.json").then((r) => (r.ok ? r.text() : ""), () => "");
runSim();
runCommit();
