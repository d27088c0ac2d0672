/** Shared test plumbing: a canned-response fetch and renderers' row parsing. */

import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import type { FetchLike, LeaderboardEntry } from '../src/api.js';

export interface Fixture {
    leaderboard: { entries: LeaderboardEntry[] };
    events: { events: { seq: number; kind: string; at: string; payload: Record<string, unknown> }[] };
    structure: { version: number; nodes: { version: number; kind: 'update' | 'repair'; group: string; target_version?: number }[] };
    competition: Record<string, unknown>;
    receipts: Record<string, unknown>;
    submit_422: { error: string; detail: { code: string; message: string; where: string }[] };
}

export function loadFixture(): Fixture {
    const path = fileURLToPath(new URL('./fixtures/stream.json', import.meta.url));
    return JSON.parse(readFileSync(path, 'utf-8')) as Fixture;
}

export interface RecordedCall {
    url: string;
    init?: RequestInit;
}

/** Routes are matched by prefix after stripping the query string. */
export function cannedFetch(
    routes: Record<string, () => { status?: number; body: unknown }>,
    calls: RecordedCall[] = [],
): FetchLike {
    return (async (input: RequestInfo | URL, init?: RequestInit) => {
        const url = String(input);
        calls.push({ url, ...(init ? { init } : {}) });
        const path = url.replace(/^https?:\/\/[^/]+/, '').split('?')[0] ?? '';
        const handler = routes[path];
        if (!handler) {
            return new Response(JSON.stringify({ error: 'not-found' }), { status: 404 });
        }
        const { status = 200, body } = handler();
        return new Response(JSON.stringify(body), {
            status,
            headers: { 'content-type': 'application/json' },
        });
    }) as FetchLike;
}

export function parseLeaderboardRows(html: string): LeaderboardEntry[] {
    const rows: LeaderboardEntry[] = [];
    const rowRe = /<tr( class="global-row")? data-team="([^"]*)" data-val="([^"]*)" data-updates="([^"]*)" data-repairs="([^"]*)" data-points="([^"]*)">(.*?)<\/tr>/g;
    const cellRe = /<td(?: class="num")?>(.*?)<\/td>/g;
    for (const m of html.matchAll(rowRe)) {
        const cells = [...(m[7] ?? '').matchAll(cellRe)].map((c) => c[1] ?? '');
        rows.push({
            team: m[2] ?? '',
            display_name: cells[1] ?? '',
            validation_loss: Number(m[3]),
            accepted_updates: Number(m[4]),
            repairs: Number(m[5]),
            points: Number(m[6]),
            is_global: m[1] !== undefined,
        });
    }
    return rows;
}

export function countBackEdges(html: string): number {
    return [...html.matchAll(/class="back-edge"/g)].length;
}
