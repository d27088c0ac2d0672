/**
 * Browser wiring: mount the poller-driven views and the submission form.
 *
 * The team token lives in sessionStorage only (scoped to the tab, gone when
 * it closes) and is read here, passed through function arguments, and never
 * interpolated into markup or URLs.
 */

import { ApiClient } from './api.js';
import { Poller } from './poller.js';
import { renderAll } from './render.js';
import { submitAndTrack } from './submit.js';

const serverUrl =
    sessionStorage.getItem('bountyboard.server') ?? window.location.origin;
const api = new ApiClient(serverUrl);

const mountPoints = ['banner', 'leaderboard', 'structure', 'feed', 'trajectory', 'groups'];

function mount(htmlByRegion: Record<string, string>): void {
    for (const region of mountPoints) {
        const el = document.getElementById(region);
        if (el) el.innerHTML = htmlByRegion[region] ?? '';
    }
}

const poller = new Poller(api, (view) => mount(renderAll(view)));
void poller.runForever();

// -- submission form ---------------------------------------------------------

const form = document.getElementById('submit-form') as HTMLFormElement | null;
const tokenInput = document.getElementById('token-input') as HTMLInputElement | null;
const bundleInput = document.getElementById('bundle-input') as HTMLTextAreaElement | null;
const outcome = document.getElementById('submit-outcome');

if (tokenInput) {
    tokenInput.value = sessionStorage.getItem('bountyboard.token') ?? '';
    tokenInput.addEventListener('change', () => {
        sessionStorage.setItem('bountyboard.token', tokenInput.value);
    });
}

form?.addEventListener('submit', (event) => {
    event.preventDefault();
    const token = sessionStorage.getItem('bountyboard.token') ?? tokenInput?.value ?? '';
    const text = bundleInput?.value ?? '';
    void submitAndTrack(api, token, text, (html) => {
        if (outcome) outcome.innerHTML = html;
    });
});
