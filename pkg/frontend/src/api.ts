/** Typed client for the annotation study HTTP service.
 *
 * The UI talks to exactly five endpoints: create session, next image,
 * image bytes, submit annotation. The export endpoint is admin-only and
 * deliberately has no wrapper here.
 */

export const LABELS = ["GAN", "Graphics", "Real"] as const;
export type Label = (typeof LABELS)[number];

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface SessionInfo {
  session_id: string;
  participant: string;
  total: number;
  created_at: string;
}

export interface ImageStep {
  done: false;
  image_id: number;
  image_url: string;
  index: number;
  total: number;
}

export interface DoneStep {
  done: true;
  index: number;
  total: number;
}

export type NextStep = ImageStep | DoneStep;

export interface AnnotationBody {
  image_id: number;
  label: Label;
  boxes: Box[];
  elapsed_ms: number;
}

export interface AnnotationAck {
  ok: boolean;
  answered: number;
  total: number;
}

/** Error payload from the service: { error: code, detail: text }. */
export class ApiError extends Error {
  code: string;
  status: number;

  constructor(code: string, detail: string, status: number) {
    super(detail);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudyClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let code = `http_${response.status}`;
      let detail = response.statusText;
      try {
        const payload = await response.json();
        if (payload && typeof payload.error === "string") {
          code = payload.error;
          detail = payload.detail ?? detail;
        }
      } catch {
        // non-JSON error body, keep the status line
      }
      throw new ApiError(code, detail, response.status);
    }
    return response.json() as Promise<T>;
  }

  createSession(studyId: string, participant: string): Promise<SessionInfo> {
    return this.request("POST", `/studies/${encodeURIComponent(studyId)}/sessions`, { participant });
  }

  nextStep(sessionId: string): Promise<NextStep> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}/next`);
  }

  submitAnnotation(sessionId: string, body: AnnotationBody): Promise<AnnotationAck> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/annotations`, body);
  }

  /** Absolute URL for the raw image bytes; displayed unmodified. */
  imageUrl(step: ImageStep): string {
    return this.base + step.image_url;
  }

  async fetchImage(step: ImageStep): Promise<ArrayBuffer> {
    const response = await this.fetchFn(this.imageUrl(step), { method: "GET" });
    if (!response.ok) {
      throw new ApiError(`http_${response.status}`, "image fetch failed", response.status);
    }
    return response.arrayBuffer();
  }
}
