/**
 * Minimal browser wiring. All logic lives in the DOM-free modules; this
 * file only moves values between inputs and the console functions.
 */

import { ServiceClient } from "./api.js";
import { defaultForm, toggleExclusion, zoneToggles, type QueryFormState } from "./form.js";
import { drillAndRun, paneModel, submitQuery, type PaneModel } from "./console.js";
import { newInvestigation, type InvestigationState } from "./state.js";
import { exportInvestigation } from "./state.js";

const $ = (id: string) => document.getElementById(id) as HTMLElement;
const input = (id: string) => document.getElementById(id) as HTMLInputElement;

let form: QueryFormState = defaultForm();
let state: InvestigationState = newInvestigation();
let client: ServiceClient;

function renderPane(model: PaneModel): void {
  const visits = $("visits");
  const colocators = $("colocators");
  const status = $("status");
  status.textContent = model.error ?? `node ${model.node.id} target ${model.node.target}`;
  visits.innerHTML = "";
  for (const row of model.timeline) {
    const li = document.createElement("li");
    const flag = row.truncated ? " [truncated]" : "";
    li.textContent = `${row.startLabel} .. ${row.endLabel}  ${row.location} (${row.name}) ${row.durationLabel}${flag}`;
    visits.appendChild(li);
  }
  colocators.innerHTML = "";
  for (const row of model.colocators) {
    const tr = document.createElement("tr");
    const drill = document.createElement("button");
    drill.textContent = "trace";
    drill.addEventListener("click", () => {
      const { outcome, result } = drillAndRun(client, state, model.node.id, row.user);
      if (outcome.kind === "already_traced") {
        status.textContent = `already traced: ${row.user} (node ${outcome.existing.id})`;
      } else if (result) {
        result.then(renderPane);
      }
      renderTree();
    });
    for (const text of [row.user, row.device, row.totalLabel]) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    const td = document.createElement("td");
    td.appendChild(drill);
    tr.appendChild(td);
    colocators.appendChild(tr);
  }
}

function renderTree(): void {
  const tree = $("tree");
  tree.innerHTML = "";
  for (const node of state.nodes.values()) {
    const li = document.createElement("li");
    li.textContent = `#${node.id} round ${node.round} ${node.target} [${node.status}]`;
    li.addEventListener("click", () => renderPane(paneModel(node)));
    tree.appendChild(li);
  }
}

async function loadZones(): Promise<void> {
  const meta = await client.zones();
  const box = $("zones");
  box.innerHTML = "";
  for (const toggle of zoneToggles(meta, new Set(form.exclusions))) {
    const label = document.createElement("label");
    const cb = document.createElement("input");
    cb.type = "checkbox";
    cb.checked = toggle.checked;
    cb.addEventListener("change", () => {
      form = toggleExclusion(form, toggle.zoneId);
    });
    label.appendChild(cb);
    label.appendChild(document.createTextNode(` exclude ${toggle.label} (${toggle.apCount} APs)`));
    box.appendChild(label);
  }
}

function readForm(): void {
  form = {
    ...form,
    target: input("target").value.trim(),
    fromEpoch: Number(input("from").value),
    toEpoch: Number(input("to").value),
    tauMinutes: Number(input("tau").value),
    omegaMinutes: Number(input("omega").value),
    granularity: input("zone-granularity").checked ? "zone" : "ap",
  };
}

export function boot(): void {
  client = new ServiceClient(input("service-url").value, (url, init) => fetch(url, init));
  state = newInvestigation();
  void client.snapshot().then((meta) => {
    state.snapshotId = meta.snapshot_id;
    $("snapshot").textContent = `snapshot ${meta.snapshot_id}`;
  });
  void loadZones();
  $("run").addEventListener("click", () => {
    readForm();
    const { result } = submitQuery(client, state, form);
    void result.then((model) => {
      renderPane(model);
      renderTree();
    });
  });
  $("export").addEventListener("click", () => {
    $("export-out").textContent = JSON.stringify(exportInvestigation(state), null, 2);
  });
}

if (typeof document !== "undefined" && document.getElementById("run")) {
  boot();
}
