import init, { agents, route_subtask, inspect_plan, loss_curve } from "./pkg/agentplan_web.js";

const $ = (id) => document.getElementById(id);

const ONE_SHOT = `[
  {"task": "Determine the population of China.", "id": 1, "name": "search_agent", "reason": "lookup", "dep": []},
  {"task": "Calculate 1% of the population of China.", "id": 2, "name": "math_agent", "reason": "arithmetic", "dep": [1]},
  {"task": "Determine the number of full flights needed to transport 1% of the population of China to Indonesia, given that a plane can carry 300 passengers.", "id": 3, "name": "math_agent", "reason": "division", "dep": [2]}
]`;

function describe(d) {
  const v = d.verdict;
  switch (v.kind) {
    case "accept": return ["Accept", `${d.assigned_agent} keeps the sub-task.`];
    case "reassign": return [`Reassign to ${v.agent}`, `${v.agent} scores ${d.best_score} and clears the high threshold.`];
    case "replan": return ["Replan", "No agent scores above the low threshold, so the whole query is planned again."];
    case "re_describe": return [`Re-describe for ${v.agent}`, `Rewrite the sub-task in the style of "${v.witness_work}" (similarity ${d.best_sim}).`];
    case "plan_in_detail": return ["Plan in detail", "Scores are in the middle band and no stored work is close enough; split the sub-task."];
    default: return [v.kind, ""];
  }
}

function setupRouting(roster) {
  const sel = $("assigned");
  const box = $("sliders");
  for (const a of roster) {
    sel.add(new Option(a.name, a.name));
    const row = document.createElement("div");
    row.className = "row";
    row.innerHTML = `<label for="s-${a.name}">${a.name}</label>` +
      `<input id="s-${a.name}" type="range" min="0" max="8" step="0.5" value="4"> <output id="o-${a.name}"></output>`;
    box.append(row);
  }
  const update = () => {
    const scores = {};
    for (const a of roster) {
      scores[a.name] = Number($(`s-${a.name}`).value);
      $(`o-${a.name}`).value = scores[a.name];
    }
    $("sim-out").value = $("sim").value;
    const sim = $("empty").checked ? -1 : Number($("sim").value);
    try {
      const d = JSON.parse(route_subtask(JSON.stringify(scores), sel.value, sim, $("allow").checked));
      const [head, detail] = describe(d);
      $("verdict").textContent = head;
      $("verdict-detail").textContent = detail;
    } catch (e) {
      $("verdict").textContent = "";
      $("verdict-detail").textContent = String(e);
    }
  };
  $("routing").addEventListener("input", update);
  update();
}

function setupPlan() {
  $("plan-text").value = ONE_SHOT;
  const go = () => {
    const out = $("plan-out");
    try {
      const v = JSON.parse(inspect_plan($("plan-text").value));
      const rows = v.subtasks.map((s) =>
        `<tr><td>${s.id}</td><td>${s.name}</td><td>[${s.dep.join(", ")}]</td><td>${escape(s.task)}</td></tr>`).join("");
      out.innerHTML = `<table><tr><th>id</th><th>agent</th><th>deps</th><th>task</th></tr>${rows}</table>` +
        `<p>Execution order: ${v.order.join(" → ")}<br>Waves: ${v.waves.map((w) => `{${w.join(", ")}}`).join(" then ")}</p>`;
    } catch (e) {
      out.innerHTML = `<p class="error">${escape(String(e))}</p>`;
    }
  };
  $("plan-go").addEventListener("click", go);
  go();
}

function escape(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function draw(history) {
  const c = $("curve");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 36;
  const top = Math.max(...history.map((h) => Math.max(h.loss, h.mse)), 1e-9);
  const x = (i) => pad + (i / Math.max(history.length - 1, 1)) * (c.width - 2 * pad);
  const y = (v) => c.height - pad - (v / top) * (c.height - 2 * pad);
  g.strokeStyle = "#999";
  g.beginPath();
  g.moveTo(pad, pad / 2);
  g.lineTo(pad, c.height - pad);
  g.lineTo(c.width - pad / 2, c.height - pad);
  g.stroke();
  g.fillStyle = "#555";
  g.fillText(top.toFixed(2), 2, y(top) + 4);
  g.fillText("0", pad - 12, c.height - pad + 4);
  g.fillText(`epoch ${history.length - 1}`, c.width - pad - 40, c.height - pad + 16);
  for (const [key, colour] of [["loss", "#c33"], ["mse", "#36c"]]) {
    g.strokeStyle = colour;
    g.beginPath();
    history.forEach((h, i) => (i ? g.lineTo(x(i), y(h[key])) : g.moveTo(x(i), y(h[key]))));
    g.stroke();
    g.fillStyle = colour;
    g.fillText(key, c.width - pad - 40, key === "loss" ? 14 : 28);
  }
}

function setupLoss() {
  $("train").addEventListener("click", () => {
    $("train-status").textContent = "training…";
    setTimeout(() => {
      try {
        const t0 = performance.now();
        const h = JSON.parse(loss_curve(Number($("n").value), Number($("dim").value), Number($("epochs").value),
          Number($("lr").value), BigInt($("seed").value)));
        const last = h[h.length - 1];
        $("train-status").textContent =
          `final mse ${last.mse.toFixed(4)} after ${last.epoch} epochs (${((performance.now() - t0) / 1000).toFixed(1)} s)`;
        draw(h);
      } catch (e) {
        $("train-status").textContent = String(e);
      }
    }, 10);
  });
}

await init();
setupRouting(JSON.parse(agents()));
setupPlan();
setupLoss();
