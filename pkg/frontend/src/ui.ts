// DOM layer: builds the studio once, then re-renders the dynamic regions
// on every store notification.

import { ApiClient, FetchLike } from "./api.js";
import { AppState, FormValues, Store } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pct(p: number): string {
  return `${(100 * p).toFixed(1)}%`;
}

export function createApp(root: HTMLElement, fetchFn: FetchLike): Store {
  const store = new Store(new ApiClient(fetchFn));

  root.innerHTML = "";
  const banner = el("div", "banner");
  banner.hidden = true;

  const form = el("form", "controls");
  const sentence = el("input");
  sentence.name = "sentence";
  sentence.placeholder = "Type a sentence…";

  const templateSelect = el("select");
  templateSelect.name = "template";
  const auto = el("option", undefined, "auto");
  auto.value = "";
  templateSelect.append(auto);

  const beam = el("input");
  beam.name = "beam";
  beam.type = "number";
  beam.min = "1";
  beam.value = "6";
  const alpha = el("input");
  alpha.name = "alpha";
  alpha.type = "number";
  alpha.step = "0.1";
  alpha.min = "0";
  alpha.value = "0.7";
  const seed = el("input");
  seed.name = "seed";
  seed.type = "number";
  seed.value = "0";

  const submit = el("button", undefined, "Generate");
  submit.type = "submit";
  form.append(sentence, templateSelect, beam, alpha, seed, submit);

  const gallery = el("div", "gallery");
  const result = el("div", "result");
  const grid = el("div", "comparison-grid");
  root.append(banner, form, gallery, result, el("h2", undefined, "Comparison"), grid);

  function formValues(): FormValues {
    return {
      sentence: sentence.value,
      template: templateSelect.value,
      beamSize: Number(beam.value) || 6,
      alpha: Number(alpha.value),
      seed: Number(seed.value) || 0,
    };
  }

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    store.submit(formValues());
  });

  function renderGallery(state: AppState): void {
    gallery.innerHTML = "";
    for (const tpl of state.templates) {
      const tile = el("figure", "template-tile");
      const img = el("img");
      img.src = tpl.thumbnail;
      img.alt = tpl.name;
      tile.append(img, el("figcaption", undefined, tpl.name));
      tile.addEventListener("click", () => {
        templateSelect.value = tpl.name;
      });
      gallery.append(tile);
    }
    const known = new Set(state.templates.map((t) => t.name));
    for (const opt of [...templateSelect.options]) {
      if (opt.value && !known.has(opt.value)) opt.remove();
    }
    for (const tpl of state.templates) {
      if (![...templateSelect.options].some((o) => o.value === tpl.name)) {
        const opt = el("option", undefined, tpl.name);
        opt.value = tpl.name;
        templateSelect.append(opt);
      }
    }
  }

  function memeCard(sentenceText: string, forced: string | null, r: AppState["latest"]): HTMLElement {
    const card = el("figure", "meme-card");
    if (!r) return card;
    const img = el("img");
    img.src = `data:image/png;base64,${r.response.image}`;
    img.alt = r.response.caption;
    const cap = el("figcaption");
    cap.append(
      el("strong", undefined, r.response.template),
      el("span", "caption-text", r.response.caption),
      el("span", "meta",
        `${forced ? "forced" : "auto " + pct(r.response.probability)} · "${sentenceText}"`),
    );
    card.append(img, cap);
    return card;
  }

  function renderResult(state: AppState): void {
    result.innerHTML = "";
    if (!state.latest) return;
    result.append(memeCard(state.latest.sentence, state.latest.forcedTemplate, state.latest));
    const ranking = el("ol", "ranking");
    for (const t of state.latest.response.templates) {
      ranking.append(el("li", undefined, `${t.name} ${pct(t.probability)}`));
    }
    result.append(ranking);
  }

  function renderGrid(state: AppState): void {
    grid.innerHTML = "";
    for (const entry of state.history) {
      grid.append(memeCard(entry.sentence, entry.forcedTemplate, entry));
    }
  }

  store.subscribe((state) => {
    banner.hidden = !state.banner;
    banner.textContent = state.banner ?? "";
    submit.disabled = state.pending || state.serviceDown;
    sentence.disabled = state.serviceDown;
    renderGallery(state);
    renderResult(state);
    renderGrid(state);
  });

  void store.loadTemplates();
  return store;
}
