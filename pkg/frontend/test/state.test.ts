import { describe, expect, it } from 'vitest';

import type { CompetitionEvent } from '../src/api.js';
import {
    applyEvents,
    applySnapshots,
    groupSeries,
    hasGap,
    initialView,
    overallTrajectory,
} from '../src/state.js';
import { loadFixture } from './helpers.js';

const fx = loadFixture();

function event(seq: number, kind = 'leaderboard_changed'): CompetitionEvent {
    return { seq, kind, at: '2024-01-01T00:00:00+00:00', payload: {} };
}

describe('event application', () => {
    it('advances the cursor and appends in order', () => {
        let view = initialView();
        view = applyEvents(view, [event(1), event(2)]);
        expect(view.cursor).toBe(2);
        expect(view.feed.map((e) => e.seq)).toEqual([1, 2]);
        view = applyEvents(view, [event(3)]);
        expect(view.cursor).toBe(3);
    });

    it('ignores already-seen events', () => {
        let view = applyEvents(initialView(), [event(1), event(2)]);
        view = applyEvents(view, [event(1), event(2), event(3)]);
        expect(view.feed.map((e) => e.seq)).toEqual([1, 2, 3]);
    });

    it('is pure: same prefix, same view (reload reconstructs identically)', () => {
        const stream = fx.events.events;
        let incremental = initialView();
        for (const e of stream) incremental = applyEvents(incremental, [e]);
        const allAtOnce = applyEvents(initialView(), stream);
        expect(incremental).toEqual(allAtOnce);
    });
});

describe('gap detection (stale cursor)', () => {
    it('no events, no gap', () => {
        expect(hasGap(5, [])).toBe(false);
    });
    it('contiguous continuation is fine', () => {
        expect(hasGap(2, [event(3), event(4)])).toBe(false);
    });
    it('a hole after the cursor means stale', () => {
        expect(hasGap(2, [event(5)])).toBe(true);
        expect(hasGap(0, [event(1), event(3)])).toBe(true);
    });
});

describe('derived series', () => {
    it('reconstructs the overall loss trajectory from acceptance events', () => {
        let view = applySnapshots(initialView(), fx.leaderboard.entries, fx.structure);
        view = applyEvents(view, fx.events.events);
        const trajectory = overallTrajectory(view);
        const accepts = fx.events.events.filter(
            (e) => e.kind === 'global_update_accepted',
        );
        expect(trajectory.length).toBe(accepts.length);
        const global = fx.leaderboard.entries.find((e) => e.is_global)!;
        const last = trajectory[trajectory.length - 1]!;
        expect(last.overallLoss).toBeCloseTo(global.validation_loss, 6);
        // walking one acceptance back adds its reduction
        if (trajectory.length >= 2) {
            const prev = trajectory[trajectory.length - 2]!;
            const lastReduction = Number(
                accepts[accepts.length - 1]!.payload['error_reduction'],
            );
            expect(prev.overallLoss).toBeCloseTo(
                last.overallLoss + lastReduction, 6);
        }
    });

    it('collects per-group activity from the structure', () => {
        const view = applySnapshots(initialView(), fx.leaderboard.entries, fx.structure);
        const series = groupSeries(view);
        const repairNodes = fx.structure.nodes.filter((n) => n.kind === 'repair');
        for (const node of repairNodes) {
            const points = series.get(node.group)!;
            const repairPoint = points.find((p) => p.kind === 'repair')!;
            expect(repairPoint.targetVersion).toBe(node.target_version);
        }
    });
});
