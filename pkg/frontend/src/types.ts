// Payload shapes mirrored from the runner's JSON API. The console never
// computes on these values; it renders them exactly as received.

export interface SessionInfo {
  id: string;
  dataset: string;
  t: number;
  status: string;
}

export interface FailureCase {
  features: Record<string, number | string>;
  chebyshev: number;
  predicted_score: number;
}

export interface PendingPayload {
  pending: boolean;
  status: string;
  iteration?: number;
  rules?: string[];
  failure?: FailureCase | null;
  question?: string;
}

export interface PendingView {
  iteration: number;
  rules: string[];
  failure: FailureCase | null;
  question: string;
}

export interface HistoryEntry {
  iteration: number;
  query: string;
  reply: string;
  min_chebyshev: number;
}

export type BannerKind = "error" | "conflict" | "info";

export interface Banner {
  kind: BannerKind;
  message: string;
}

export interface ConsoleState {
  sessions: SessionInfo[];
  activeId: string | null;
  pending: PendingView | null;
  status: string;
  history: HistoryEntry[];
  banner: Banner | null;
  inFlight: boolean;
  showNumbers: boolean;
  draft: string;
}

export function initialState(): ConsoleState {
  return {
    sessions: [],
    activeId: null,
    pending: null,
    status: "unknown",
    history: [],
    banner: null,
    inFlight: false,
    showNumbers: true,
    draft: "",
  };
}
