// Thin client for the authentication service; all paths live under /api/v1.

import { SampleV1 } from "./schema.js";

export interface TrainSummary {
    user: string;
    samples_used: number;
    epochs: number;
    final_loss: number;
    val_eer: number;
    threshold: number;
    imposter_source: string;
}

export interface AuthResult {
    user: string;
    verdict: "accept" | "reject";
    score: number;
    decision_value: number;
    threshold: number;
    image_id: string;
}

export interface EnrollResult {
    accepted: boolean;
    sample_count: number;
}

export class ApiError extends Error {
    constructor(readonly status: number, detail: string) {
        super(detail);
    }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    constructor(private readonly fetchFn: FetchLike,
                private readonly base: string = "") {}

    private async request<T>(method: string, path: string,
                             body?: unknown): Promise<T> {
        const resp = await this.fetchFn(`${this.base}/api/v1${path}`, {
            method,
            headers: body === undefined
                ? undefined
                : { "Content-Type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) {
            let detail = `${resp.status} ${resp.statusText}`;
            try {
                const payload = await resp.json();
                if (payload && typeof payload.detail !== "undefined") {
                    detail = typeof payload.detail === "string"
                        ? payload.detail
                        : JSON.stringify(payload.detail);
                }
            } catch {
                // non-JSON error body; keep the status line
            }
            throw new ApiError(resp.status, detail);
        }
        return resp.json() as Promise<T>;
    }

    health(): Promise<{ status: string; users: number }> {
        return this.request("GET", "/health");
    }

    enroll(userId: string, sample: SampleV1): Promise<EnrollResult> {
        return this.request("POST", `/users/${encodeURIComponent(userId)}/samples`,
                            sample);
    }

    train(userId: string): Promise<TrainSummary> {
        return this.request("POST", `/users/${encodeURIComponent(userId)}/train`);
    }

    authenticate(userId: string, sample: SampleV1): Promise<AuthResult> {
        return this.request(
            "POST", `/users/${encodeURIComponent(userId)}/authenticate`, sample);
    }

    previewUrl(userId: string, imageId: string): string {
        return `${this.base}/api/v1/users/${encodeURIComponent(userId)}`
            + `/preview/${encodeURIComponent(imageId)}`;
    }
}
