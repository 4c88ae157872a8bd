import type { ConsoleState, HistoryEntry, PendingView } from "./types.js";

// Pure view: state in, HTML string out. Every value arriving from the API
// is escaped and rendered verbatim; nothing is recomputed here.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function renderBanner(state: ConsoleState): string {
  if (state.banner === null) return "";
  const cls = { error: "banner-error", conflict: "banner-conflict", info: "banner-info" }[
    state.banner.kind
  ];
  return `<div class="banner ${cls}" role="alert">${escapeHtml(state.banner.message)}</div>`;
}

function renderSessionPicker(state: ConsoleState): string {
  if (state.sessions.length === 0) {
    return `<p class="muted">No sessions running.</p>`;
  }
  const options = state.sessions
    .map((s) => {
      const selected = s.id === state.activeId ? " selected" : "";
      return `<option value="${escapeHtml(s.id)}"${selected}>${escapeHtml(
        s.id,
      )} (${escapeHtml(s.dataset)}, day ${s.t}, ${escapeHtml(s.status)})</option>`;
    })
    .join("");
  return `<label>Session <select id="session-picker">${options}</select></label>`;
}

function renderFailure(pending: PendingView, showNumbers: boolean): string {
  if (pending.failure === null) {
    return "";
  }
  const rows = Object.entries(pending.failure.features)
    .map(
      ([name, value]) =>
        `<tr><td>${escapeHtml(name)}</td><td>${escapeHtml(String(value))}</td></tr>`,
    )
    .join("");
  const numbers = showNumbers
    ? `<p class="failure-numbers">measured distance ` +
      `<code>${escapeHtml(String(pending.failure.chebyshev))}</code>, ` +
      `model confidence <code>${escapeHtml(String(pending.failure.predicted_score))}</code></p>`
    : "";
  return `
    <h3>Most confusing failure</h3>
    <p>The model expected this configuration to be near-optimal, but it
    performed poorly:</p>
    <table class="failure-table"><tbody>${rows}</tbody></table>
    ${numbers}`;
}

function renderPending(state: ConsoleState): string {
  if (state.pending === null) {
    return `<section class="panel idle">
      <h2>Nothing to review</h2>
      <p class="muted">Session status: ${escapeHtml(state.status)}. The console
      polls every 5 seconds and will show the next question here.</p>
    </section>`;
  }
  const pending = state.pending;
  const rules =
    pending.rules.length > 0
      ? `<ol class="rules">${pending.rules
          .map((r) => `<li>${escapeHtml(r)}</li>`)
          .join("")}</ol>`
      : `<p class="muted">(no rules yet)</p>`;
  const submitDisabled =
    state.inFlight || state.draft.trim().length === 0 ? " disabled" : "";
  return `<section class="panel pending">
    <h2>Iteration ${pending.iteration} needs your feedback</h2>
    <h3>Current rule set</h3>
    ${rules}
    ${renderFailure(pending, state.showNumbers)}
    <h3>Question</h3>
    <blockquote id="question">${escapeHtml(pending.question)}</blockquote>
    <div class="quick-actions">
      <button type="button" data-action="valid">Valid</button>
      <button type="button" data-action="invalid">Invalid</button>
      <button type="button" data-action="modify">Modify</button>
      <button type="button" data-action="toggle-numbers">
        ${state.showNumbers ? "Hide" : "Show"} numeric scores
      </button>
    </div>
    <form id="reply-form">
      <textarea id="reply-text" rows="4"
        placeholder="Your reply, e.g. Rule: threads should be higher"
      >${escapeHtml(state.draft)}</textarea>
      <button id="submit-reply" type="submit"${submitDisabled}>Send reply</button>
    </form>
  </section>`;
}

function renderHistory(entries: HistoryEntry[]): string {
  if (entries.length === 0) {
    return `<section class="panel"><h2>History</h2>
      <p class="muted">No completed feedback rounds yet.</p></section>`;
  }
  const rows = entries
    .map(
      (e) => `<details class="history-entry">
        <summary>Iteration ${e.iteration}: best distance
          <code>${escapeHtml(String(e.min_chebyshev))}</code></summary>
        <h4>Query</h4><pre>${escapeHtml(e.query)}</pre>
        <h4>Your reply</h4><pre>${escapeHtml(e.reply)}</pre>
      </details>`,
    )
    .join("");
  const trend = entries
    .map((e) => `${e.iteration}:${String(e.min_chebyshev)}`)
    .join(" , ");
  return `<section class="panel"><h2>History (${entries.length} rounds)</h2>
    <p class="trend">trend: ${escapeHtml(trend)}</p>${rows}</section>`;
}

export function renderApp(state: ConsoleState): string {
  return `
    <header>
      <h1>Expert feedback console</h1>
      ${renderSessionPicker(state)}
    </header>
    ${renderBanner(state)}
    ${renderPending(state)}
    ${renderHistory(state.history)}
  `;
}
