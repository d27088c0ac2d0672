/**
 * The submission form: post a bundle, render inline validation errors at
 * their reported locations, then poll the receipt and render the verdicts
 * with the measured numbers a team needs (w, group losses, w*delta, points).
 */

import { ApiClient, BundleIssue, Receipt, SubmitResult, Verdict } from './api.js';
import { escapeHtml } from './render.js';

const fmt = (x: number | null) =>
    x === null ? '&mdash;' : x.toLocaleString('en-US', { maximumFractionDigits: 4 });

/** Point an ASCII caret at a parser offset inside the offending line. */
export function annotateOffset(text: string, offset: number): string {
    let seen = 0;
    for (const line of text.split('\n')) {
        if (offset <= seen + line.length) {
            const col = offset - seen;
            return `${line}\n${' '.repeat(Math.max(0, col))}^`;
        }
        seen += line.length + 1;
    }
    return text;
}

export function renderIssues(issues: BundleIssue[], bundleText: string): string {
    const items = issues
        .map((issue) => {
            let snippet = '';
            const match = /offset (\d+)/.exec(issue.where ?? '');
            if (match) {
                let groupText = '';
                try {
                    const parsed = JSON.parse(bundleText) as { group?: unknown };
                    if (typeof parsed.group === 'string') groupText = parsed.group;
                } catch {
                    groupText = '';
                }
                if (groupText) {
                    snippet =
                        `<pre class="caret">${escapeHtml(
                            annotateOffset(groupText, Number(match[1])),
                        )}</pre>`;
                }
            }
            return (
                `<li class="issue" data-code="${escapeHtml(issue.code)}"` +
                ` data-where="${escapeHtml(issue.where ?? '')}">` +
                `<span class="code">${escapeHtml(issue.code)}</span> ` +
                `<span class="where">${escapeHtml(issue.where ?? '')}</span> ` +
                `${escapeHtml(issue.message)}${snippet}</li>`
            );
        })
        .join('');
    return `<ul class="issues">${items}</ul>`;
}

function renderVerdict(name: string, verdict: Verdict | null): string {
    if (!verdict) return `<div class="verdict pending">${name}: pending</div>`;
    const m = verdict.measured;
    const head =
        verdict.decision === 'accepted'
            ? `<span class="accepted">${name}: accepted v${verdict.version}</span>`
            : `<span class="rejected">${name}: rejected (${escapeHtml(verdict.reason ?? '')})</span>`;
    const numbers =
        `<dl class="measured">` +
        `<dt>w</dt><dd>${fmt(m.weight)}</dd>` +
        `<dt>L(f,g)</dt><dd>${fmt(m.loss_current)}</dd>` +
        `<dt>L(h,g)</dt><dd>${fmt(m.loss_candidate)}</dd>` +
        `<dt>w&middot;&Delta;</dt><dd>${fmt(m.weighted_improvement)}</dd>` +
        `<dt>overall</dt><dd>${fmt(m.overall_before)} &rarr; ${fmt(m.overall_after)}</dd>` +
        `</dl>`;
    const extras =
        verdict.decision === 'accepted'
            ? `<div class="points">points ${fmt(verdict.points_awarded)}, ` +
              `repairs ${verdict.repairs_triggered.length}</div>`
            : '';
    return `<div class="verdict ${verdict.decision}">${head}${numbers}${extras}</div>`;
}

export function renderReceipt(receipt: Receipt): string {
    const header =
        `<div class="receipt" data-id="${receipt.id}" data-status="${receipt.status}">` +
        `submission #${receipt.id} &mdash; ${escapeHtml(receipt.status)}`;
    if (receipt.status !== 'evaluated') {
        const reason = receipt.reason
            ? `<div class="reason">${escapeHtml(receipt.reason)}</div>`
            : '';
        return `${header}${reason}</div>`;
    }
    return (
        header +
        renderVerdict('global', receipt.verdict_global) +
        renderVerdict('local', receipt.verdict_local) +
        '</div>'
    );
}

export function renderSubmitOutcome(result: SubmitResult, bundleText: string): string {
    switch (result.kind) {
        case 'queued':
            return renderReceipt(result.receipt);
        case 'invalid':
            return renderIssues(result.issues, bundleText);
        case 'rate_limited':
            return (
                `<div class="banner rate-limit">daily submission limit reached; ` +
                `resets at ${escapeHtml(result.resetAt)}</div>`
            );
        case 'error':
            return `<div class="banner">submit failed (${result.status})</div>`;
    }
}

export interface SubmitFlowOptions {
    pollMs?: number;
    maxPolls?: number;
    sleep?: (ms: number) => Promise<void>;
}

/** Submit, then poll the receipt until evaluated; yields HTML snapshots. */
export async function submitAndTrack(
    api: ApiClient,
    token: string,
    bundleText: string,
    onRender: (html: string) => void,
    options: SubmitFlowOptions = {},
): Promise<SubmitResult> {
    const sleep = options.sleep ?? ((ms) => new Promise<void>((r) => setTimeout(r, ms)));
    const result = await api.submit(token, bundleText);
    onRender(renderSubmitOutcome(result, bundleText));
    if (result.kind !== 'queued') return result;
    let receipt = result.receipt;
    const maxPolls = options.maxPolls ?? 120;
    for (let i = 0; i < maxPolls && receipt.status === 'queued'; i++) {
        await sleep(options.pollMs ?? 500);
        receipt = await api.receipt(token, receipt.id);
        onRender(renderReceipt(receipt));
    }
    return { kind: 'queued', receipt };
}
