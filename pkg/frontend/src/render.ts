/**
 * HTML renderers: pure functions from the view model to markup strings.
 *
 * Keeping these as string -> string functions (mounted with innerHTML by
 * main.ts) makes the whole render path unit-testable without a browser. No
 * renderer ever receives the team token.
 */

import type { CompetitionEvent, LeaderboardEntry, Structure } from './api.js';
import { GroupSeriesPoint, TrajectoryPoint, ViewModel, groupSeries, overallTrajectory } from './state.js';

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;')
        .replace(/'/g, '&#39;');
}

const fmt = (x: number) =>
    x.toLocaleString('en-US', { maximumFractionDigits: 2 });

// ---------------------------------------------------------------------------
// leaderboard
// ---------------------------------------------------------------------------

export function renderLeaderboard(entries: LeaderboardEntry[]): string {
    const rows = entries
        .map((e, i) => {
            const cls = e.is_global ? ' class="global-row"' : '';
            return (
                `<tr${cls} data-team="${escapeHtml(e.team)}"` +
                ` data-val="${e.validation_loss}" data-updates="${e.accepted_updates}"` +
                ` data-repairs="${e.repairs}" data-points="${e.points}">` +
                `<td>${i + 1}</td>` +
                `<td>${escapeHtml(e.display_name)}</td>` +
                `<td class="num">${fmt(e.validation_loss)}</td>` +
                `<td class="num">${e.accepted_updates}</td>` +
                `<td class="num">${e.repairs}</td>` +
                `<td class="num">${fmt(e.points)}</td></tr>`
            );
        })
        .join('');
    return (
        '<table class="leaderboard"><thead><tr>' +
        '<th>#</th><th>Model</th><th>Validation loss</th>' +
        '<th>Updates</th><th>Repairs</th><th>Points</th>' +
        `</tr></thead><tbody>${rows}</tbody></table>`
    );
}

// ---------------------------------------------------------------------------
// model structure (the decision-list diagram: newest on top, repairs gray
// with a back-edge pointing at their frozen target version)
// ---------------------------------------------------------------------------

export function renderStructure(structure: Structure | null): string {
    if (!structure) return '<p class="muted">no model yet</p>';
    const nodes = [...structure.nodes].sort((a, b) => b.version - a.version);
    const parts: string[] = ['<div class="pdl">'];
    for (const node of nodes) {
        if (node.kind === 'repair') {
            parts.push(
                `<div class="node repair" data-version="${node.version}">` +
                `<span class="tag">v${node.version} repair</span>` +
                `<code>${escapeHtml(node.group)}</code>` +
                `<span class="back-edge" data-from="${node.version}"` +
                ` data-to="${node.target_version}">&#8617; v${node.target_version}</span>` +
                '</div>',
            );
        } else {
            parts.push(
                `<div class="node update" data-version="${node.version}">` +
                `<span class="tag">v${node.version} update</span>` +
                `<code>${escapeHtml(node.group)}</code>` +
                '</div>',
            );
        }
    }
    parts.push('<div class="node base"><span class="tag">v0 base</span></div>');
    parts.push('</div>');
    return parts.join('');
}

// ---------------------------------------------------------------------------
// event feed
// ---------------------------------------------------------------------------

function describeEvent(event: CompetitionEvent): string {
    if (event.kind === 'global_update_accepted') {
        const red = Number(event.payload['error_reduction']);
        return (
            `v${event.payload['version']} accepted from ` +
            `${escapeHtml(String(event.payload['team']))}, ` +
            `overall error down ${fmt(red)}`
        );
    }
    if (event.kind === 'repair_applied') {
        return (
            `repair v${event.payload['version']}: ` +
            `<code>${escapeHtml(String(event.payload['group']))}</code> ` +
            `&#8617; v${event.payload['target_version']}`
        );
    }
    if (event.kind === 'leaderboard_changed') return 'leaderboard changed';
    return escapeHtml(event.kind);
}

export function renderFeed(feed: CompetitionEvent[]): string {
    const items = [...feed]
        .sort((a, b) => b.seq - a.seq)
        .map(
            (e) =>
                `<li class="event ${escapeHtml(e.kind)}" data-seq="${e.seq}">` +
                `<span class="seq">#${e.seq}</span> ${describeEvent(e)}</li>`,
        )
        .join('');
    return `<ul class="feed">${items}</ul>`;
}

// ---------------------------------------------------------------------------
// charts: overall trajectory sparkline and per-group activity
// ---------------------------------------------------------------------------

export function renderTrajectory(points: TrajectoryPoint[]): string {
    if (points.length === 0) return '<p class="muted">no accepted updates yet</p>';
    const w = 360;
    const h = 80;
    const losses = points.map((p) => p.overallLoss);
    const lo = Math.min(...losses);
    const hi = Math.max(...losses);
    const span = hi - lo || 1;
    const step = points.length > 1 ? w / (points.length - 1) : 0;
    const coords = points.map((p, i) => {
        const x = (i * step).toFixed(1);
        const y = (h - ((p.overallLoss - lo) / span) * (h - 8) - 4).toFixed(1);
        return `${x},${y}`;
    });
    const dots = points
        .map((p, i) => {
            const xy = coords[i] ?? '0,0';
            const [x, y] = xy.split(',');
            return `<circle cx="${x}" cy="${y}" r="2.5" data-version="${p.version}"><title>v${p.version}: ${fmt(p.overallLoss)}</title></circle>`;
        })
        .join('');
    return (
        `<svg class="trajectory" viewBox="0 0 ${w} ${h}" width="${w}" height="${h}">` +
        `<polyline points="${coords.join(' ')}" fill="none" />${dots}</svg>`
    );
}

export function renderGroupPanel(series: Map<string, GroupSeriesPoint[]>): string {
    if (series.size === 0) return '<p class="muted">no groups registered yet</p>';
    const blocks: string[] = [];
    for (const [group, points] of series) {
        const marks = points
            .map((p) =>
                p.kind === 'repair'
                    ? `<span class="mark repair" title="repaired at v${p.version}">v${p.version}&#8617;v${p.targetVersion}</span>`
                    : `<span class="mark update" title="updated at v${p.version}">v${p.version}</span>`,
            )
            .join(' ');
        blocks.push(
            `<div class="group-row" data-group="${escapeHtml(group)}">` +
            `<code>${escapeHtml(group)}</code><span class="marks">${marks}</span></div>`,
        );
    }
    return `<div class="groups">${blocks.join('')}</div>`;
}

// ---------------------------------------------------------------------------
// whole page
// ---------------------------------------------------------------------------

export function renderBanner(view: ViewModel): string {
    if (view.connected) return '';
    return (
        '<div class="banner">connection lost, retrying&hellip; ' +
        `<span class="detail">${escapeHtml(view.lastError ?? '')}</span></div>`
    );
}

export function renderAll(view: ViewModel): Record<string, string> {
    return {
        banner: renderBanner(view),
        leaderboard: renderLeaderboard(view.leaderboard),
        structure: renderStructure(view.structure),
        feed: renderFeed(view.feed),
        trajectory: renderTrajectory(overallTrajectory(view)),
        groups: renderGroupPanel(groupSeries(view)),
    };
}
