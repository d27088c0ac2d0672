/**
 * The long-poll loop: wait on /events, refresh leaderboard and structure
 * whenever something happened, re-render. Connection loss shows a banner and
 * retries with exponential backoff; a stale cursor (sequence gap, e.g. the
 * server restarted) triggers a full refresh from scratch.
 */

import { ApiClient } from './api.js';
import {
    ViewModel,
    applyEvents,
    applySnapshots,
    hasGap,
    initialView,
    setConnection,
} from './state.js';

export interface PollerOptions {
    longPollSeconds?: number;
    backoffStartMs?: number;
    backoffCapMs?: number;
    sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class Poller {
    view: ViewModel = initialView();
    private backoffMs: number;
    private running = false;

    constructor(
        private readonly api: ApiClient,
        private readonly onRender: (view: ViewModel) => void,
        private readonly options: PollerOptions = {},
    ) {
        this.backoffMs = options.backoffStartMs ?? 1000;
    }

    /** Pull everything from scratch; used at startup and after a stale cursor. */
    async fullRefresh(): Promise<void> {
        const view = initialView();
        const [leaderboard, structure, competition, events] = await Promise.all([
            this.api.leaderboard(),
            this.api.structure(),
            this.api.competition(),
            this.api.events(0),
        ]);
        this.view = setConnection(
            applyEvents(applySnapshots(view, leaderboard, structure, competition), events),
            true,
            null,
        );
        this.onRender(this.view);
    }

    /** One poll step; returns how many new events arrived. */
    async tick(): Promise<number> {
        const events = await this.api.events(
            this.view.cursor,
            this.options.longPollSeconds ?? 25,
        );
        if (hasGap(this.view.cursor, events)) {
            await this.fullRefresh();
            return this.view.feed.length;
        }
        if (events.length === 0) {
            if (!this.view.connected) {
                this.view = setConnection(this.view, true, null);
                this.onRender(this.view);
            }
            return 0;
        }
        const [leaderboard, structure] = await Promise.all([
            this.api.leaderboard(),
            this.api.structure(),
        ]);
        this.view = setConnection(
            applyEvents(applySnapshots(this.view, leaderboard, structure), events),
            true,
            null,
        );
        this.onRender(this.view);
        return events.length;
    }

    async runForever(): Promise<void> {
        const sleep = this.options.sleep ?? defaultSleep;
        this.running = true;
        await this.safeStart();
        while (this.running) {
            try {
                await this.tick();
                this.backoffMs = this.options.backoffStartMs ?? 1000;
            } catch (err) {
                this.view = setConnection(this.view, false, String(err));
                this.onRender(this.view);
                await sleep(this.backoffMs);
                this.backoffMs = Math.min(
                    this.backoffMs * 2,
                    this.options.backoffCapMs ?? 30000,
                );
            }
        }
    }

    private async safeStart(): Promise<void> {
        const sleep = this.options.sleep ?? defaultSleep;
        while (this.running) {
            try {
                await this.fullRefresh();
                return;
            } catch (err) {
                this.view = setConnection(this.view, false, String(err));
                this.onRender(this.view);
                await sleep(this.backoffMs);
                this.backoffMs = Math.min(
                    this.backoffMs * 2,
                    this.options.backoffCapMs ?? 30000,
                );
            }
        }
    }

    stop(): void {
        this.running = false;
    }
}
