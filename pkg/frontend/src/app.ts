// Page logic: keypad capture drives the enroll/train/authenticate loop.
// Dependencies (fetch, clock, session id) are injected so tests can run the
// whole loop against recorded fixtures.

import { ApiClient, ApiError } from "./api.js";
import { EntryCapture } from "./capture.js";
import { validateSample } from "./schema.js";

export interface AppDeps {
    fetch: (input: string, init?: RequestInit) => Promise<Response>;
    now: () => number;
    sessionId?: string;
}

export interface AppHandles {
    capture: EntryCapture;
    api: ApiClient;
    /** resolves once no request is in flight */
    idle: () => Promise<void>;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
    const found = doc.getElementById(id);
    if (!found) {
        throw new Error(`missing element #${id}`);
    }
    return found as T;
}

export function initApp(doc: Document, deps: AppDeps): AppHandles {
    const api = new ApiClient(deps.fetch);
    const capture = new EntryCapture(deps.now);
    const sessionId = deps.sessionId ?? `s-${Math.floor(deps.now())}`;

    const userInput = el<HTMLInputElement>(doc, "user-id");
    const pinLengthInput = el<HTMLInputElement>(doc, "pin-length");
    const modeEnroll = el<HTMLInputElement>(doc, "mode-enroll");
    const attemptLabel = el<HTMLSelectElement>(doc, "attempt-label");
    const keypad = el<HTMLElement>(doc, "keypad");
    const progress = el<HTMLElement>(doc, "entry-progress");
    const status = el<HTMLElement>(doc, "status");
    const sampleCount = el<HTMLElement>(doc, "sample-count");
    const trainBtn = el<HTMLButtonElement>(doc, "train-btn");
    const trainInfo = el<HTMLElement>(doc, "train-info");
    const banner = el<HTMLElement>(doc, "verdict-banner");
    const scoreLine = el<HTMLElement>(doc, "score-line");
    const tallyLine = el<HTMLElement>(doc, "tally");
    const preview = el<HTMLImageElement>(doc, "preview");

    let busy = false;
    let waiters: (() => void)[] = [];
    const tally = { genuine: 0, genuineRejected: 0,
                    imposter: 0, imposterAccepted: 0 };

    function idle(): Promise<void> {
        if (!busy) {
            return Promise.resolve();
        }
        return new Promise((resolve) => waiters.push(resolve));
    }

    function setBusy(value: boolean): void {
        busy = value;
        keypad.classList.toggle("locked", value);
        trainBtn.disabled = value;
        if (!value) {
            waiters.forEach((fn) => fn());
            waiters = [];
        }
    }

    function pinLength(): number {
        const n = parseInt(pinLengthInput.value, 10);
        return Number.isFinite(n) && n >= 2 ? n : 10;
    }

    function showStatus(text: string, isError = false): void {
        status.textContent = text;
        status.classList.toggle("error", isError);
    }

    function refreshProgress(): void {
        progress.textContent =
            `${"●".repeat(capture.count)}${"○".repeat(
                Math.max(0, pinLength() - 1 - capture.count))}`;
    }

    function refreshTally(): void {
        const far = tally.imposter
            ? (tally.imposterAccepted / tally.imposter).toFixed(2) : "-";
        const frr = tally.genuine
            ? (tally.genuineRejected / tally.genuine).toFixed(2) : "-";
        tallyLine.textContent =
            `session FAR ${far} (${tally.imposterAccepted}/${tally.imposter})  `
            + `FRR ${frr} (${tally.genuineRejected}/${tally.genuine})`;
    }

    function surface(err: unknown): void {
        if (err instanceof ApiError && err.status === 404) {
            showStatus(`${err.message} (enroll samples and press train first)`,
                       true);
        } else if (err instanceof ApiError) {
            showStatus(`error ${err.status}: ${err.message} (retry the entry)`,
                       true);
        } else {
            showStatus(`network error: ${String(err)} (retry the entry)`, true);
        }
    }

    async function submitEntry(): Promise<void> {
        const expected = pinLength();
        if (capture.count !== expected) {
            showStatus(`entry has ${capture.count} keys, expected ${expected}; `
                       + "nothing sent", true);
            capture.reset();
            refreshProgress();
            return;
        }
        const label = attemptLabel.value === "imposter" ? "imposter" : "genuine";
        const sample = capture.toSample(userInput.value.trim(), sessionId,
                                        modeEnroll.checked ? "genuine" : label);
        capture.reset();
        refreshProgress();
        const problems = validateSample(sample, expected);
        if (problems.length > 0) {
            showStatus(`invalid sample: ${problems[0]}; nothing sent`, true);
            return;
        }
        setBusy(true);
        try {
            if (modeEnroll.checked) {
                const result = await api.enroll(sample.user_id, sample);
                sampleCount.textContent = String(result.sample_count);
                showStatus(`enrolled entry #${result.sample_count}`);
            } else {
                const result = await api.authenticate(sample.user_id, sample);
                banner.textContent = result.verdict.toUpperCase();
                banner.className = `banner ${result.verdict}`;
                scoreLine.textContent =
                    `s(x) = ${result.score.toFixed(4)}   `
                    + `f(x) = ${result.decision_value >= 0 ? "+" : ""}`
                    + `${result.decision_value.toFixed(4)}`;
                if (sample.label === "genuine") {
                    tally.genuine += 1;
                    if (result.verdict === "reject") {
                        tally.genuineRejected += 1;
                    }
                } else {
                    tally.imposter += 1;
                    if (result.verdict === "accept") {
                        tally.imposterAccepted += 1;
                    }
                }
                refreshTally();
                preview.src = api.previewUrl(sample.user_id, result.image_id);
                showStatus(`scored against ${result.user}`);
            }
        } catch (err) {
            surface(err);
        } finally {
            setBusy(false);
        }
    }

    function keyPosition(button: HTMLElement, ev: MouseEvent) {
        const rect = button.getBoundingClientRect();
        return {
            x: rect.width > 0 ? (ev.clientX - rect.left) / rect.width : 0.5,
            y: rect.height > 0 ? (ev.clientY - rect.top) / rect.height : 0.5,
            pressure: (ev as PointerEvent).pressure ?? 0,
        };
    }

    keypad.addEventListener("pointerdown", (ev) => {
        const button = (ev.target as HTMLElement).closest("[data-key]");
        if (!button || busy) {
            return;
        }
        const key = (button as HTMLElement).dataset.key as string;
        if (key === "CLEAR") {
            return; // acted on at release
        }
        capture.press(key, keyPosition(button as HTMLElement, ev as MouseEvent));
    });

    keypad.addEventListener("pointerup", (ev) => {
        const button = (ev.target as HTMLElement).closest("[data-key]");
        if (!button || busy) {
            return;
        }
        const key = (button as HTMLElement).dataset.key as string;
        if (key === "CLEAR") {
            capture.reset();
            refreshProgress();
            showStatus("entry cleared");
            return;
        }
        capture.release(key);
        refreshProgress();
        if (key === "ENTER") {
            void submitEntry();
        }
    });

    trainBtn.addEventListener("click", async () => {
        if (busy) {
            return;
        }
        setBusy(true);
        try {
            const summary = await api.train(userInput.value.trim());
            trainInfo.textContent =
                `trained on ${summary.samples_used} samples: `
                + `validation EER ${summary.val_eer.toFixed(3)}, `
                + `threshold ${summary.threshold.toFixed(4)} `
                + `(negatives: ${summary.imposter_source})`;
            showStatus("model trained");
        } catch (err) {
            surface(err);
        } finally {
            setBusy(false);
        }
    });

    refreshProgress();
    refreshTally();
    return { capture, api, idle };
}
