import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { Poller } from '../src/poller.js';
import { cannedFetch, loadFixture } from './helpers.js';

const fx = loadFixture();

describe('poller resilience', () => {
    it('a sequence gap triggers a full refresh (stale cursor)', async () => {
        let phase = 0;
        const api = new ApiClient('http://server', cannedFetch({
            '/leaderboard': () => ({ body: fx.leaderboard }),
            '/model/global/structure': () => ({ body: fx.structure }),
            '/competition': () => ({ body: fx.competition }),
            '/events': () => {
                phase += 1;
                if (phase === 1) return { body: { events: [] } };     // initial refresh
                if (phase === 2) {
                    // events resume past a hole: the cursor is stale
                    return { body: { events: fx.events.events.slice(3) } };
                }
                return { body: fx.events };                            // full refresh pull
            },
        }));
        const poller = new Poller(api, () => {});
        await poller.fullRefresh();
        expect(poller.view.feed.length).toBe(0);
        await poller.tick();
        // after the gap the poller refetched everything from seq 0
        expect(poller.view.feed.map((e) => e.seq)).toEqual(
            fx.events.events.map((e) => e.seq));
    });

    it('connection loss sets the banner flag and recovers', async () => {
        let failing = true;
        const api = new ApiClient('http://server', (async (input: RequestInfo | URL) => {
            if (failing) throw new Error('boom');
            return cannedFetch({
                '/leaderboard': () => ({ body: fx.leaderboard }),
                '/model/global/structure': () => ({ body: fx.structure }),
                '/competition': () => ({ body: fx.competition }),
                '/events': () => ({ body: fx.events }),
            })(input);
        }) as typeof fetch);

        const renders: boolean[] = [];
        const poller = new Poller(api, (view) => renders.push(view.connected), {
            sleep: async () => {
                failing = false;   // service comes back during the backoff
                poller.stop();
            },
            backoffStartMs: 1,
        });
        await poller.runForever();
        expect(renders).toContain(false); // banner was shown while down
    });

    it('an empty poll clears a previously shown banner', async () => {
        const api = new ApiClient('http://server', cannedFetch({
            '/leaderboard': () => ({ body: fx.leaderboard }),
            '/model/global/structure': () => ({ body: fx.structure }),
            '/competition': () => ({ body: fx.competition }),
            '/events': () => ({ body: { events: [] } }),
        }));
        const poller = new Poller(api, () => {});
        await poller.fullRefresh();
        poller.view = { ...poller.view, connected: false, lastError: 'x' };
        await poller.tick();
        expect(poller.view.connected).toBe(true);
        expect(poller.view.lastError).toBeNull();
    });
});
