import init, { Demo, flops } from "./pkg/gwin_web.js";

const $ = (id) => document.getElementById(id);
let demo;

function draw(canvas, pixels) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(28, 28);
  for (let i = 0; i < 784; i++) {
    const v = Math.round(255 * Math.min(1, Math.max(0, pixels[i])));
    img.data.set([v, v, v, 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
}

function fmt(m) {
  return m ? `${m.mean.toFixed(1)} ± ${m.std.toFixed(1)}` : "–";
}

function classify() {
  const i = Math.min(Number($("index").value) || 0, demo.test_len() - 1);
  const tau = Number($("tau").value);
  $("tau-value").textContent = tau.toFixed(2);
  const r = JSON.parse(demo.infer(i, tau, 0n));
  draw($("input"), demo.test_image(i));
  draw($("output"), r.transformed);
  $("decision").textContent =
    `true label ${r.label}${r.corrupted ? " (corrupted)" : ""}\n` +
    `classifier: label ${r.initial.label}, certainty ${r.initial.certainty.toFixed(3)}\n` +
    `decision at τ = ${tau.toFixed(2)}: ${r.path}\n` +
    `after generator: label ${r.post_transform.label}, certainty ${r.post_transform.certainty.toFixed(3)}\n` +
    `final label ${r.final_label}`;
}

function showFlops() {
  const rows = JSON.parse(flops());
  $("flops").innerHTML = "<tr><th>model</th><th>layer</th><th>FLOPs</th></tr>" +
    rows.flatMap((r) => [
      ...r.layers.map((l) => `<tr><td>${r.model}</td><td style="text-align:left">${l.layer}</td><td>${l.flops.toLocaleString()}</td></tr>`),
      `<tr><th>${r.model}</th><th>total</th><th>${r.total.toLocaleString()}</th></tr>`,
    ]).join("");
}

async function main() {
  await init();
  showFlops();
  $("status").textContent = "training the toy classifier…";
  await new Promise((r) => setTimeout(r, 20));
  demo = new Demo(0n);
  $("status").textContent = `ready: confident subset ${demo.confident_size()} images`;
  $("train").disabled = false;
  $("sweep").disabled = false;
  $("iter").textContent = `iteration ${demo.iteration()}`;
  classify();

  $("train").onclick = async () => {
    $("train").disabled = true;
    for (let k = 0; k < 5; k++) {
      demo.train(5);
      $("iter").textContent = `iteration ${demo.iteration()}`;
      await new Promise((r) => setTimeout(r, 0));
    }
    $("train").disabled = false;
    classify();
  };
  $("index").oninput = classify;
  $("tau").oninput = classify;
  $("sweep").onclick = () => {
    const rows = JSON.parse(demo.sweep(1n));
    $("sweep-table").innerHTML =
      "<tr><th>τ</th><th>% reject</th><th>BNN acc (rejected)</th><th>BNN+GWIN acc (rejected)</th><th>overall Δ</th></tr>" +
      rows.map((r) => `<tr><td>${r.tau.toFixed(2)}</td><td>${r.pct_reject.mean.toFixed(1)}</td>` +
        `<td>${fmt(r.bnn_acc_rejected)}</td><td>${fmt(r.bnn_gwin_acc_rejected)}</td><td>${r.overall_acc_delta.mean.toFixed(2)}</td></tr>`).join("");
  };
}

main().catch((e) => { $("status").textContent = `error: ${e}`; });
