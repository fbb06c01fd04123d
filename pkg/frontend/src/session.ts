import { ApiError, Box, ImageStep, Label, StudyClient } from "./api.js";
import { Rand, isLabel, shuffledLabels } from "./labels.js";

export type Phase = "idle" | "active" | "done" | "full";

export interface SessionState {
  phase: Phase;
  sessionId: string;
  participant: string;
  total: number;
  /** Images answered so far, straight from the server cursor. */
  answered: number;
  /** Current image when active, null otherwise. */
  step: ImageStep | null;
  labelOrder: Label[];
}

export interface ControllerOptions {
  studyId?: string;
  now?: () => number;
  rand?: Rand;
}

export function progressText(state: SessionState): string {
  if (state.phase === "done") return `${state.total}/${state.total}`;
  if (state.phase !== "active") return "";
  return `${state.answered + 1}/${state.total}`;
}

/** Drives one participant session against the study service.
 *
 * The server cursor is the source of truth: every state change comes from
 * a /next round trip, so a reload or a duplicate-submission race always
 * resynchronizes instead of double counting. Failed submissions leave the
 * state untouched so the caller can retry without losing the annotation.
 */
export class SessionController {
  state: SessionState;
  private client: StudyClient;
  private studyId: string;
  private now: () => number;
  private rand: Rand | undefined;
  private shownAt: number;

  constructor(client: StudyClient, options: ControllerOptions = {}) {
    this.client = client;
    this.studyId = options.studyId ?? "study";
    this.now = options.now ?? (() => Date.now());
    this.rand = options.rand;
    this.shownAt = 0;
    this.state = {
      phase: "idle",
      sessionId: "",
      participant: "",
      total: 0,
      answered: 0,
      step: null,
      labelOrder: [...shuffledLabels(this.rand)],
    };
  }

  /** Create a fresh session. A full study is terminal: nothing is stored. */
  async start(participant: string): Promise<SessionState> {
    let info;
    try {
      info = await this.client.createSession(this.studyId, participant);
    } catch (e) {
      if (e instanceof ApiError && e.code === "study_full") {
        this.state = { ...this.state, phase: "full", sessionId: "", step: null };
        return this.state;
      }
      throw e;
    }
    this.state = {
      ...this.state,
      sessionId: info.session_id,
      participant: info.participant,
      total: info.total,
    };
    return this.advance();
  }

  /** Rejoin an existing session at the server cursor (reload path). */
  async resume(sessionId: string, labelOrder?: Label[]): Promise<SessionState> {
    if (labelOrder && labelOrder.length === 3 && labelOrder.every(isLabel)) {
      this.state = { ...this.state, labelOrder: [...labelOrder] };
    }
    this.state = { ...this.state, sessionId };
    return this.advance();
  }

  /** Restamp the elapsed-time clock at the moment the image is rendered. */
  markDisplayed(): void {
    this.shownAt = this.now();
  }

  /** Post the annotation for the current image and move to the next one. */
  async submit(label: Label, boxes: Box[]): Promise<SessionState> {
    const step = this.state.step;
    if (this.state.phase !== "active" || step === null) {
      throw new Error("no image awaiting annotation");
    }
    if (!isLabel(label)) {
      throw new Error(`label must be one of ${this.state.labelOrder.join(", ")}`);
    }
    const elapsed = Math.max(0, Math.round(this.now() - this.shownAt));
    try {
      await this.client.submitAnnotation(this.state.sessionId, {
        image_id: step.image_id,
        label,
        boxes,
        elapsed_ms: elapsed,
      });
    } catch (e) {
      if (!(e instanceof ApiError && e.code === "duplicate")) throw e;
      // already recorded (double click, second tab): fall through and resync
    }
    return this.advance();
  }

  private async advance(): Promise<SessionState> {
    const next = await this.client.nextStep(this.state.sessionId);
    if (next.done) {
      this.state = {
        ...this.state,
        phase: "done",
        total: next.total,
        answered: next.index,
        step: null,
      };
    } else {
      this.state = {
        ...this.state,
        phase: "active",
        total: next.total,
        answered: next.index,
        step: next,
      };
      this.shownAt = this.now();
    }
    return this.state;
  }
}
