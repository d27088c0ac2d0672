/**
 * The dashboard view model and its pure transition functions.
 *
 * The view is a pure function of (event log prefix, latest leaderboard and
 * structure responses): applying the same inputs in the same order always
 * reconstructs the identical model, which is what makes a mid-competition
 * page reload safe.
 */

import type {
    CompetitionEvent,
    CompetitionInfo,
    LeaderboardEntry,
    Structure,
} from './api.js';

export interface GroupSeriesPoint {
    version: number;
    kind: 'update' | 'repair';
    targetVersion?: number;
}

export interface TrajectoryPoint {
    version: number;
    overallLoss: number;
}

export interface ViewModel {
    cursor: number;
    leaderboard: LeaderboardEntry[];
    structure: Structure | null;
    competition: CompetitionInfo | null;
    feed: CompetitionEvent[];
    connected: boolean;
    lastError: string | null;
}

export const FEED_LIMIT = 200;

export function initialView(): ViewModel {
    return {
        cursor: 0,
        leaderboard: [],
        structure: null,
        competition: null,
        feed: [],
        connected: false,
        lastError: null,
    };
}

/** New events arrived with a hole in the sequence: our cursor is stale. */
export function hasGap(cursor: number, events: CompetitionEvent[]): boolean {
    if (events.length === 0) return false;
    const seqs = events.map((e) => e.seq);
    const first = Math.min(...seqs);
    if (first > cursor + 1) return true;
    for (let i = 1; i < seqs.length; i++) {
        const prev = seqs[i - 1];
        const here = seqs[i];
        if (prev === undefined || here === undefined || here !== prev + 1) return true;
    }
    return false;
}

export function applyEvents(view: ViewModel, events: CompetitionEvent[]): ViewModel {
    if (events.length === 0) return view;
    const fresh = events.filter((e) => e.seq > view.cursor);
    const feed = view.feed.concat(fresh).slice(-FEED_LIMIT);
    const cursor = fresh.reduce((m, e) => Math.max(m, e.seq), view.cursor);
    return { ...view, feed, cursor };
}

export function applySnapshots(
    view: ViewModel,
    leaderboard: LeaderboardEntry[],
    structure: Structure,
    competition: CompetitionInfo | null = view.competition,
): ViewModel {
    return { ...view, leaderboard, structure, competition };
}

export function setConnection(view: ViewModel, connected: boolean, error: string | null): ViewModel {
    return { ...view, connected, lastError: error };
}

/**
 * Overall validation-loss trajectory reconstructed from the feed: the
 * leaderboard's Global row gives the current loss and each accepted-update
 * event carries its net error reduction, so walking the acceptances backward
 * recovers the loss after every accepted update.
 */
export function overallTrajectory(view: ViewModel): TrajectoryPoint[] {
    const global = view.leaderboard.find((e) => e.is_global);
    if (!global) return [];
    const accepts = view.feed.filter((e) => e.kind === 'global_update_accepted');
    const points: TrajectoryPoint[] = [];
    let loss = global.validation_loss;
    for (let i = accepts.length - 1; i >= 0; i--) {
        const event = accepts[i];
        if (!event) continue;
        const version = Number(event.payload['version']);
        points.unshift({ version, overallLoss: loss });
        loss += Number(event.payload['error_reduction']);
    }
    return points;
}

/** Per registered group: the versions where it was updated or repaired. */
export function groupSeries(view: ViewModel): Map<string, GroupSeriesPoint[]> {
    const series = new Map<string, GroupSeriesPoint[]>();
    if (!view.structure) return series;
    for (const node of view.structure.nodes) {
        const points = series.get(node.group) ?? [];
        const point: GroupSeriesPoint = { version: node.version, kind: node.kind };
        if (node.kind === 'repair' && node.target_version !== undefined) {
            point.targetVersion = node.target_version;
        }
        points.push(point);
        series.set(node.group, points);
    }
    return series;
}
