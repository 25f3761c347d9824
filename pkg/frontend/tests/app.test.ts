// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { GenerateResponse } from "../src/api.js";
import { createApp } from "../src/ui.js";

const TEMPLATES = {
  templates: [
    { name: "Success Kid", thumbnail: "/templates/0/image/0" },
    { name: "Matrix Morpheus", thumbnail: "/templates/1/image/0" },
    { name: "Doge", thumbnail: "/templates/2/image/0" },
  ],
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function makeGenerateResponse(template: string, caption: string): GenerateResponse {
  return {
    template,
    probability: 0.8,
    templates: [
      { name: template, probability: 0.8 },
      { name: "Doge", probability: 0.1 },
    ],
    caption,
    score: -1.23,
    latency_ms: 12.5,
    image: btoa(`png-bytes-for-${template}-${caption}`),
  };
}

interface RecordedCall {
  url: string;
  body?: Record<string, unknown>;
}

/** Mock fetch with a controllable per-request handler. */
function makeFetch(
  handler: (url: string, body?: Record<string, unknown>) => Promise<Response>,
) {
  const calls: RecordedCall[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ url, body });
    return handler(url, body);
  };
  return { fetchFn, calls };
}

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

function submitSentence(root: HTMLElement, sentence: string, template = ""): void {
  const input = root.querySelector<HTMLInputElement>('input[name="sentence"]')!;
  const select = root.querySelector<HTMLSelectElement>('select[name="template"]')!;
  input.value = sentence;
  select.value = template;
  root.querySelector("form")!.dispatchEvent(new Event("submit", { cancelable: true }));
}

describe("meme studio", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
  });

  it("runs the full demo loop: gallery, auto, then two forced templates", async () => {
    const { fetchFn, calls } = makeFetch(async (url, body) => {
      if (url === "/templates") return jsonResponse(TEMPLATES);
      const forced = body?.template as string | undefined;
      const tpl = forced ?? "Success Kid";
      return jsonResponse(makeGenerateResponse(tpl, `caption for ${tpl}`));
    });
    createApp(root, fetchFn);
    await flush();

    // gallery renders one tile per template, plus auto in the selector
    const tiles = root.querySelectorAll(".template-tile");
    expect(tiles).toHaveLength(3);
    const select = root.querySelector<HTMLSelectElement>('select[name="template"]')!;
    expect([...select.options].map((o) => o.textContent)).toEqual([
      "auto",
      "Success Kid",
      "Matrix Morpheus",
      "Doge",
    ]);

    // auto generation
    submitSentence(root, "Please save the world from Corona");
    await flush();
    expect(calls.at(-1)?.body).toMatchObject({
      sentence: "Please save the world from Corona",
      beam_size: 6,
      alpha: 0.7,
      seed: 0,
    });
    expect(calls.at(-1)?.body).not.toHaveProperty("template");
    expect(root.querySelector(".result .caption-text")?.textContent).toBe(
      "caption for Success Kid",
    );

    // force two different templates on the same sentence
    submitSentence(root, "Please save the world from Corona", "Matrix Morpheus");
    await flush();
    submitSentence(root, "Please save the world from Corona", "Doge");
    await flush();

    const gridCards = root.querySelectorAll(".comparison-grid .meme-card");
    expect(gridCards).toHaveLength(3); // auto + 2 forced
    const captions = [...gridCards].map(
      (c) => c.querySelector(".caption-text")?.textContent,
    );
    expect(captions).toContain("caption for Matrix Morpheus");
    expect(captions).toContain("caption for Doge");
    const images = [...gridCards].map((c) => c.querySelector("img")?.src);
    expect(new Set(images).size).toBe(3); // two distinct forced memes rendered
  });

  it("shows a banner and stays read-only when the service is down", async () => {
    const { fetchFn } = makeFetch(async () => {
      throw new TypeError("fetch failed");
    });
    createApp(root, fetchFn);
    await flush();

    const banner = root.querySelector<HTMLElement>(".banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("unreachable");
    expect(root.querySelector("button")?.disabled).toBe(true);
    expect(
      root.querySelector<HTMLInputElement>('input[name="sentence"]')?.disabled,
    ).toBe(true);
  });

  it("surfaces API error bodies without adding history entries", async () => {
    const { fetchFn } = makeFetch(async (url) => {
      if (url === "/templates") return jsonResponse(TEMPLATES);
      return jsonResponse(
        { error: "unknown_template", detail: "unknown template 'Nope'" },
        422,
      );
    });
    createApp(root, fetchFn);
    await flush();

    submitSentence(root, "hello world", "Matrix Morpheus");
    await flush();

    const banner = root.querySelector<HTMLElement>(".banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("unknown_template");
    expect(root.querySelectorAll(".comparison-grid .meme-card")).toHaveLength(0);
    // recoverable error: the form stays enabled
    expect(root.querySelector("button")?.disabled).toBe(false);
  });

  it("refuses a second submit while one request is in flight", async () => {
    let release!: (r: Response) => void;
    const gate = new Promise<Response>((resolve) => (release = resolve));
    const { fetchFn, calls } = makeFetch(async (url) => {
      if (url === "/templates") return jsonResponse(TEMPLATES);
      return gate;
    });
    const store = createApp(root, fetchFn);
    await flush();

    submitSentence(root, "first sentence");
    await flush();
    expect(store.state.pending).toBe(true);
    expect(root.querySelector("button")?.disabled).toBe(true);

    submitSentence(root, "second sentence");
    await flush();
    // only /templates + the first generate went out
    expect(calls.filter((c) => c.url === "/generate")).toHaveLength(1);

    release(jsonResponse(makeGenerateResponse("Doge", "much wow")));
    await flush();
    expect(store.state.pending).toBe(false);
    expect(root.querySelectorAll(".comparison-grid .meme-card")).toHaveLength(1);
  });

  it("ignores empty sentences", async () => {
    const { fetchFn, calls } = makeFetch(async () => jsonResponse(TEMPLATES));
    createApp(root, fetchFn);
    await flush();

    submitSentence(root, "   ");
    await flush();
    expect(calls.filter((c) => c.url === "/generate")).toHaveLength(0);
    expect(root.querySelector<HTMLElement>(".banner")?.hidden).toBe(false);
  });

  it("reproduces the identical image when regenerating with a fixed seed", async () => {
    const { fetchFn } = makeFetch(async (url, body) => {
      if (url === "/templates") return jsonResponse(TEMPLATES);
      // deterministic function of the request, as the service guarantees
      const key = `${body?.sentence}|${body?.seed}`;
      return jsonResponse({
        ...makeGenerateResponse("Doge", `caption ${key}`),
        image: btoa(`image ${key}`),
      });
    });
    createApp(root, fetchFn);
    await flush();

    submitSentence(root, "same input");
    await flush();
    const first = root.querySelector<HTMLImageElement>(".result img")!.src;
    submitSentence(root, "same input");
    await flush();
    const second = root.querySelector<HTMLImageElement>(".result img")!.src;
    expect(second).toBe(first);
  });
});
