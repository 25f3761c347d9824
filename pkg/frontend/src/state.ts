// App state and the request lifecycle. Kept DOM-free so the logic is easy
// to test: the store mutates plain objects and notifies subscribers.

import {
  ApiClient,
  GenerateRequest,
  GenerateResponse,
  ServiceError,
  TemplateInfo,
} from "./api.js";

export interface HistoryEntry {
  id: number;
  sentence: string;
  forcedTemplate: string | null;
  response: GenerateResponse;
}

export interface AppState {
  templates: TemplateInfo[];
  templatesLoaded: boolean;
  serviceDown: boolean;
  pending: boolean;
  banner: string | null;
  latest: HistoryEntry | null;
  history: HistoryEntry[];
}

export interface FormValues {
  sentence: string;
  template: string; // "" means auto
  beamSize: number;
  alpha: number;
  seed: number;
}

type Listener = (state: AppState) => void;

export class Store {
  readonly state: AppState = {
    templates: [],
    templatesLoaded: false,
    serviceDown: false,
    pending: false,
    banner: null,
    latest: null,
    history: [],
  };

  // Single in-flight request: submissions are refused while pending, and a
  // monotonically increasing token discards responses that arrive after a
  // newer request was issued.
  private requestToken = 0;
  private nextId = 1;
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  async loadTemplates(): Promise<void> {
    try {
      this.state.templates = await this.api.listTemplates();
      this.state.templatesLoaded = true;
      this.state.serviceDown = false;
      this.state.banner = null;
    } catch (err) {
      this.state.serviceDown = true;
      this.state.banner =
        err instanceof ServiceError
          ? `service error: ${err.message}`
          : "service unreachable — showing read-only state";
    }
    this.notify();
  }

  /** Submit a generation request. Returns false if refused (pending or empty). */
  submit(values: FormValues): boolean {
    if (this.state.pending) return false;
    if (!values.sentence.trim()) {
      this.state.banner = "enter a sentence first";
      this.notify();
      return false;
    }
    const token = ++this.requestToken;
    this.state.pending = true;
    this.state.banner = null;
    this.notify();

    const req: GenerateRequest = {
      sentence: values.sentence,
      beam_size: values.beamSize,
      alpha: values.alpha,
      seed: values.seed,
    };
    if (values.template) req.template = values.template;

    void this.api
      .generate(req)
      .then((response) => {
        if (token !== this.requestToken) return; // stale response, discard
        const entry: HistoryEntry = {
          id: this.nextId++,
          sentence: values.sentence,
          forcedTemplate: values.template || null,
          response,
        };
        this.state.latest = entry;
        this.state.history = [entry, ...this.state.history];
        this.state.serviceDown = false;
      })
      .catch((err) => {
        if (token !== this.requestToken) return;
        if (err instanceof ServiceError) {
          this.state.banner = `${err.code}: ${err.message}`;
        } else {
          this.state.serviceDown = true;
          this.state.banner = "service unreachable — showing read-only state";
        }
      })
      .finally(() => {
        if (token !== this.requestToken) return;
        this.state.pending = false;
        this.notify();
      });
    return true;
  }
}
