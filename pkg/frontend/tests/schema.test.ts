// The recorded fixture is a sample the service actually accepted; the
// validator must agree with it field for field.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { validateSample, SampleV1 } from "../src/schema.js";

function loadFixture(): SampleV1 {
    return JSON.parse(readFileSync("tests/fixtures/sample.json", "utf8"));
}

describe("sample schema v1", () => {
    it("accepts the recorded service fixture", () => {
        const sample = loadFixture();
        expect(validateSample(sample, sample.events.length)).toEqual([]);
    });

    it("rejects a wrong schema version", () => {
        const sample = { ...loadFixture(), schema: 2 };
        expect(validateSample(sample, sample.events.length))
            .toContain("schema must be 1, got 2");
    });

    it("rejects empty identifiers and unknown labels", () => {
        const sample = { ...loadFixture(), user_id: "", label: "maybe" };
        const errors = validateSample(sample, sample.events.length);
        expect(errors).toContain("user_id must be a non-empty string");
        expect(errors).toContain("label must be genuine or imposter, got maybe");
    });

    it("rejects the wrong number of events", () => {
        const sample = loadFixture();
        expect(validateSample(sample, sample.events.length + 1))
            .toContain(`expected ${sample.events.length + 1} events, `
                       + `got ${sample.events.length}`);
    });

    it("rejects non-finite numbers and inverted timestamps", () => {
        const sample = loadFixture();
        const events = sample.events.map((e) => ({ ...e }));
        events[0].pressure = NaN;
        events[1].release_time = events[1].press_time - 1;
        const errors = validateSample({ ...sample, events }, events.length);
        expect(errors).toContain("event 0: pressure must be a finite number");
        expect(errors).toContain("event 1: release_time precedes press_time");
    });

    it("rejects press times that go backwards", () => {
        const sample = loadFixture();
        const events = sample.events.map((e) => ({ ...e }));
        const swap = events[2].press_time;
        events[2].press_time = events[3].press_time;
        events[3].press_time = swap;
        const errors = validateSample({ ...sample, events }, events.length);
        expect(errors.some((e) => e.includes("press_time decreases"))).toBe(true);
    });
});
