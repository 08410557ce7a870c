// Sample wire format, version 1.  Mirrors the validation the service applies
// so malformed entries never leave the browser.

export interface KeyEventV1 {
    key_id: string;
    press_time: number;
    release_time: number;
    x: number;
    y: number;
    pressure: number;
    area: number;
}

export interface SampleV1 {
    schema: 1;
    user_id: string;
    session_id: string;
    label: "genuine" | "imposter";
    events: KeyEventV1[];
}

const EVENT_NUMBER_FIELDS = [
    "press_time", "release_time", "x", "y", "pressure", "area",
] as const;

function isFiniteNumber(value: unknown): value is number {
    return typeof value === "number" && Number.isFinite(value);
}

/** Returns a list of problems; an empty list means the sample is valid. */
export function validateSample(sample: unknown, pinLength: number): string[] {
    const errors: string[] = [];
    if (typeof sample !== "object" || sample === null) {
        return ["sample must be an object"];
    }
    const s = sample as Record<string, unknown>;
    if (s.schema !== 1) {
        errors.push(`schema must be 1, got ${String(s.schema)}`);
    }
    if (typeof s.user_id !== "string" || s.user_id.length === 0) {
        errors.push("user_id must be a non-empty string");
    }
    if (typeof s.session_id !== "string" || s.session_id.length === 0) {
        errors.push("session_id must be a non-empty string");
    }
    if (s.label !== "genuine" && s.label !== "imposter") {
        errors.push(`label must be genuine or imposter, got ${String(s.label)}`);
    }
    if (!Array.isArray(s.events)) {
        errors.push("events must be an array");
        return errors;
    }
    if (s.events.length !== pinLength) {
        errors.push(`expected ${pinLength} events, got ${s.events.length}`);
    }
    let lastPress = -Infinity;
    s.events.forEach((event, i) => {
        if (typeof event !== "object" || event === null) {
            errors.push(`event ${i} must be an object`);
            return;
        }
        const e = event as Record<string, unknown>;
        if (typeof e.key_id !== "string" || e.key_id.length === 0) {
            errors.push(`event ${i}: key_id must be a non-empty string`);
        }
        for (const field of EVENT_NUMBER_FIELDS) {
            if (!isFiniteNumber(e[field])) {
                errors.push(`event ${i}: ${field} must be a finite number`);
            }
        }
        if (isFiniteNumber(e.press_time) && isFiniteNumber(e.release_time)
            && e.release_time < e.press_time) {
            errors.push(`event ${i}: release_time precedes press_time`);
        }
        if (isFiniteNumber(e.press_time)) {
            if (e.press_time < lastPress) {
                errors.push(`event ${i}: press_time decreases`);
            }
            lastPress = e.press_time;
        }
    });
    return errors;
}
