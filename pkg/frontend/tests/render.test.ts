import assert from "node:assert/strict";
import { test } from "node:test";

import { ServiceClient } from "../src/api.js";
import { fmtDuration, fmtUtc, locationTimeline, proximityTable } from "../src/render.js";
import type { TraceQueryBody } from "../src/types.js";
import { MockService, collectNumbers } from "./mock.js";

const BODY: TraceQueryBody = {
  target: "u-alpha", t_start: 0, t_end: 86400,
  tau: 0, omega: 0, granularity: "ap", exclusions: [],
};

test("every rendered number is present in the service response", async () => {
  const mock = new MockService();
  const client = new ServiceClient("http://svc", mock.fetch);
  const location = await client.location(BODY);
  const proximity = await client.proximity(BODY);

  const allowed = collectNumbers(location);
  for (const row of locationTimeline(location)) {
    for (const n of [row.start, row.end, row.durationSeconds]) {
      assert.ok(allowed.has(n), `timeline number ${n} not in response`);
    }
    // labels are formatted views of those same carried values
    assert.equal(row.startLabel, fmtUtc(row.start));
    assert.equal(row.durationLabel, fmtDuration(row.durationSeconds));
  }

  const allowedProx = collectNumbers(proximity);
  for (const row of proximityTable(proximity)) {
    assert.ok(allowedProx.has(row.totalOverlapSeconds));
    for (const span of row.spans) {
      assert.ok(allowedProx.has(span.start) && allowedProx.has(span.end));
    }
  }
});

test("rows keep the server's ordering", async () => {
  const mock = new MockService();
  const client = new ServiceClient("http://svc", mock.fetch);
  const location = await client.location(BODY);
  const proximity = await client.proximity(BODY);
  assert.deepEqual(
    locationTimeline(location).map((r) => r.location),
    location.visits.map((v) => v.location),
  );
  assert.deepEqual(
    proximityTable(proximity).map((r) => r.user),
    proximity.co_locators.map((c) => c.user),
  );
});

test("truncated flag carried through", async () => {
  const mock = new MockService();
  const client = new ServiceClient("http://svc", mock.fetch);
  const location = await client.location(BODY);
  const rows = locationTimeline(location);
  assert.equal(rows[rows.length - 1].truncated, true);
});

test("duration formatting", () => {
  assert.equal(fmtDuration(45), "45s");
  assert.equal(fmtDuration(600), "10m00s");
  assert.equal(fmtDuration(5400), "1h30m");
  assert.equal(fmtUtc(0), "1970-01-01 00:00:00");
});
