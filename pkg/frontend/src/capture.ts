// Keypad capture: press/release pairs with monotonic timestamps become the
// event list of one sample.  The clock is injected so tests can script exact
// timings; the browser passes performance.now.

import { KeyEventV1, SampleV1 } from "./schema.js";

export interface PressDetail {
    x: number;         // pointer position inside the key, 0..1
    y: number;
    pressure: number;  // 0 when the platform reports nothing
}

interface PendingPress {
    pressTime: number;
    x: number;
    y: number;
    pressure: number;
}

const FALLBACK_PRESSURE = 0.5;
const CONTACT_AREA = 1.0; // browsers do not report finger area

function clamp01(v: number): number {
    return Math.min(1, Math.max(0, v));
}

export class EntryCapture {
    private events: KeyEventV1[] = [];
    private pending = new Map<string, PendingPress[]>();

    constructor(private readonly now: () => number) {}

    get count(): number {
        return this.events.length;
    }

    get keys(): string[] {
        return this.events.map((e) => e.key_id);
    }

    press(keyId: string, detail: PressDetail): void {
        const queue = this.pending.get(keyId) ?? [];
        queue.push({
            pressTime: this.now(),
            x: clamp01(detail.x),
            y: clamp01(detail.y),
            pressure: detail.pressure > 0 ? detail.pressure : FALLBACK_PRESSURE,
        });
        this.pending.set(keyId, queue);
    }

    release(keyId: string): void {
        const queue = this.pending.get(keyId);
        const press = queue?.shift();
        if (!press) {
            return; // release without a tracked press (pointer slid in); drop it
        }
        this.events.push({
            key_id: keyId,
            press_time: press.pressTime,
            release_time: this.now(),
            x: press.x,
            y: press.y,
            pressure: press.pressure,
            area: CONTACT_AREA,
        });
    }

    reset(): void {
        this.events = [];
        this.pending.clear();
    }

    toSample(userId: string, sessionId: string,
             label: "genuine" | "imposter"): SampleV1 {
        return {
            schema: 1,
            user_id: userId,
            session_id: sessionId,
            label,
            // sort by press time: overlapping taps may complete out of order
            events: [...this.events].sort((a, b) => a.press_time - b.press_time),
        };
    }
}
