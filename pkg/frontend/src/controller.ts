import { ApiClient, ApiError } from "./api.js";
import type { ConsoleState } from "./types.js";
import { initialState } from "./types.js";

// Drives the polling loop and the one-reply-per-iteration submit guard.
// All state transitions happen here so the view layer stays a pure render.

export class ConsoleController {
  readonly state: ConsoleState = initialState();

  constructor(private readonly client: ApiClient) {}

  private setBanner(kind: "error" | "conflict" | "info", message: string): void {
    this.state.banner = { kind, message };
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) {
      if (err.kind === "not_found") return "session not found";
      if (err.kind === "network") return "cannot reach the session API";
      return err.message || `request failed (${err.status})`;
    }
    return String(err);
  }

  selectSession(id: string): void {
    if (this.state.activeId !== id) {
      this.state.activeId = id;
      this.state.pending = null;
      this.state.history = [];
      this.state.banner = null;
    }
  }

  /** One poll tick: refresh the session list, pending query, and history. */
  async refresh(): Promise<void> {
    try {
      this.state.sessions = await this.client.listSessions();
      if (this.state.activeId === null && this.state.sessions.length > 0) {
        this.state.activeId = this.state.sessions[0].id;
      }
      const active = this.state.activeId;
      if (active === null) {
        return;
      }
      const payload = await this.client.getPending(active);
      this.state.status = payload.status;
      if (payload.pending && payload.iteration !== undefined) {
        this.state.pending = {
          iteration: payload.iteration,
          rules: payload.rules ?? [],
          failure: payload.failure ?? null,
          question: payload.question ?? "",
        };
      } else {
        this.state.pending = null;
      }
      this.state.history = await this.client.getHistory(active);
      if (this.state.banner !== null && this.state.banner.kind === "error") {
        this.state.banner = null; // connectivity restored
      }
    } catch (err) {
      this.setBanner("error", this.describe(err));
    }
  }

  get canSubmit(): boolean {
    return (
      this.state.pending !== null &&
      !this.state.inFlight &&
      this.state.draft.trim().length > 0
    );
  }

  setDraft(text: string): void {
    this.state.draft = text;
  }

  /** Prefill the draft with a Day-1 quick action (recognition over recall). */
  quickAction(action: "valid" | "invalid" | "modify"): void {
    if (action === "valid") this.state.draft = "Valid: all";
    if (action === "invalid") this.state.draft = "Invalid: ";
    if (action === "modify") this.state.draft = "Modify: ";
  }

  toggleNumbers(): void {
    this.state.showNumbers = !this.state.showNumbers;
  }

  /** Submit the current draft for the pending iteration (first reply wins). */
  async submit(): Promise<void> {
    const pending = this.state.pending;
    if (pending === null || this.state.inFlight) {
      return;
    }
    const text = this.state.draft.trim();
    if (text.length === 0) {
      return;
    }
    this.state.inFlight = true;
    try {
      await this.client.postFeedback(this.state.activeId ?? "", pending.iteration, text);
      this.state.draft = "";
      this.setBanner("info", `reply recorded for iteration ${pending.iteration}`);
    } catch (err) {
      if (err instanceof ApiError && err.kind === "conflict") {
        this.setBanner("conflict", "already answered: this iteration has a reply");
      } else {
        this.setBanner("error", this.describe(err));
      }
    } finally {
      this.state.inFlight = false;
    }
    await this.refresh();
  }
}

export const POLL_INTERVAL_MS = 5000;
