/**
 * Typed client over the competition server's public and team-scoped routes.
 *
 * The dashboard only ever talks to these endpoints; there is no route here
 * (and none on the server) for validation or test artifacts. The bearer
 * token travels in the Authorization header only, never in a URL.
 */

export interface LeaderboardEntry {
    team: string;
    display_name: string;
    validation_loss: number;
    accepted_updates: number;
    repairs: number;
    points: number;
    is_global: boolean;
}

export interface CompetitionEvent {
    seq: number;
    kind: string;
    at: string;
    payload: Record<string, unknown>;
}

export interface StructureNode {
    version: number;
    kind: 'update' | 'repair';
    group: string;
    target_version?: number;
}

export interface Structure {
    version: number;
    nodes: StructureNode[];
}

export interface Measured {
    weight: number;
    loss_current: number | null;
    loss_candidate: number | null;
    weighted_improvement: number | null;
    overall_before: number;
    overall_after_update: number | null;
    overall_after: number | null;
}

export interface RepairAction {
    group: string;
    target_version: number;
    version: number;
}

export interface Verdict {
    decision: 'accepted' | 'rejected';
    reason: string | null;
    measured: Measured;
    version: number | null;
    repairs_triggered: RepairAction[];
    points_awarded: number;
}

export interface Receipt {
    id: number;
    team: string;
    received_at: string;
    status: 'queued' | 'evaluated' | 'rejected_precheck';
    verdict_global: Verdict | null;
    verdict_local: Verdict | null;
    reason: string | null;
}

export interface BundleIssue {
    code: string;
    message: string;
    where: string;
}

export interface CompetitionInfo {
    alpha: number;
    daily_submission_limit: number;
    reward_mode: string;
    global_version: number;
    frozen: boolean;
    teams: string[];
}

export type SubmitResult =
    | { kind: 'queued'; receipt: Receipt }
    | { kind: 'invalid'; issues: BundleIssue[] }
    | { kind: 'rate_limited'; resetAt: string }
    | { kind: 'error'; status: number; message: string };

export type FetchLike = typeof fetch;

export class ApiClient {
    constructor(
        private readonly baseUrl: string,
        private readonly fetchImpl: FetchLike = fetch,
    ) {}

    private async getJson<T>(path: string): Promise<T> {
        const res = await this.fetchImpl(this.baseUrl + path);
        if (!res.ok) throw new Error(`GET ${path} failed: ${res.status}`);
        return (await res.json()) as T;
    }

    async leaderboard(): Promise<LeaderboardEntry[]> {
        const body = await this.getJson<{ entries: LeaderboardEntry[] }>('/leaderboard');
        return body.entries;
    }

    async events(since: number, timeoutSec = 0): Promise<CompetitionEvent[]> {
        const body = await this.getJson<{ events: CompetitionEvent[] }>(
            `/events?since=${since}&timeout=${timeoutSec}`,
        );
        return body.events;
    }

    async structure(): Promise<Structure> {
        return this.getJson<Structure>('/model/global/structure');
    }

    async competition(): Promise<CompetitionInfo> {
        return this.getJson<CompetitionInfo>('/competition');
    }

    async submit(token: string, bundleText: string): Promise<SubmitResult> {
        const res = await this.fetchImpl(this.baseUrl + '/submissions', {
            method: 'POST',
            headers: { Authorization: `Bearer ${token}` },
            body: bundleText,
        });
        if (res.status === 202) {
            return { kind: 'queued', receipt: (await res.json()) as Receipt };
        }
        if (res.status === 422) {
            const body = (await res.json()) as { detail: BundleIssue[] };
            return { kind: 'invalid', issues: body.detail };
        }
        if (res.status === 429) {
            const body = (await res.json()) as { detail: { reset_at: string } };
            return { kind: 'rate_limited', resetAt: body.detail.reset_at };
        }
        return { kind: 'error', status: res.status, message: await res.text() };
    }

    async receipt(token: string, id: number): Promise<Receipt> {
        const res = await this.fetchImpl(`${this.baseUrl}/submissions/${id}`, {
            headers: { Authorization: `Bearer ${token}` },
        });
        if (!res.ok) throw new Error(`receipt ${id} failed: ${res.status}`);
        return (await res.json()) as Receipt;
    }
}
