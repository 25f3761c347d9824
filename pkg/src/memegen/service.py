"""HTTP API over the pipeline: health, template catalog, and seeded meme
generation. Checkpoints are loaded once at startup and never mutated, so
concurrent requests are safe."""
from __future__ import annotations

import base64
import io
import json
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .compositor import BitmapFont, RenderSpec, render_caption
from .corpus import TemplateCatalog, UnknownTemplate
from .generation import DecodeParams, generate_meme
from .models import load_checkpoint
from .text import TagLexicon

DEFAULT_TOP_K = 5


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse({"error": code, "detail": detail}, status_code=status)


def _render_png(entry, caption: str, variant_index: int, font: BitmapFont) -> bytes:
    import numpy as np
    from PIL import Image

    image = Image.open(entry.image_paths[variant_index]).convert("RGB")
    rendered = render_caption(np.asarray(image), RenderSpec(caption, entry.caption_box), font)
    buf = io.BytesIO()
    Image.fromarray(rendered).save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def create_app(selector_path, generator_path, catalog_path,
               tag_lexicon: TagLexicon | None = None,
               font: BitmapFont | None = None,
               static_dir=None, media_dir=None) -> FastAPI:
    from .assets import default_font, default_tag_lexicon

    catalog = TemplateCatalog.load(catalog_path)
    selector, sel_vocab, _ = load_checkpoint(selector_path)
    generator, vocab, _ = load_checkpoint(generator_path)
    if sel_vocab.tokens != vocab.tokens:
        raise ValueError("selector and generator checkpoints use different vocabularies")
    tags = tag_lexicon or default_tag_lexicon()
    font = font or default_font()

    app = FastAPI(title="memegen", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/templates")
    def templates():
        return {"templates": [
            {"name": e.name, "thumbnail": f"/templates/{i}/image/0"}
            for i, e in enumerate(catalog.entries)
        ]}

    @app.get("/templates/{index}/image/{variant}")
    def template_image(index: int, variant: int):
        if not 0 <= index < len(catalog):
            return _error(404, "unknown_template", f"no template {index}")
        entry = catalog.entries[index]
        if not 0 <= variant < len(entry.image_paths):
            return _error(404, "unknown_variant", f"no variant {variant}")
        return FileResponse(entry.image_paths[variant], media_type="image/png")

    @app.post("/generate")
    async def generate(request: Request):
        t_start = time.time()
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return _error(400, "bad_json", "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "request body must be a JSON object")

        sentence = body.get("sentence")
        if not isinstance(sentence, str) or not sentence.strip():
            return _error(400, "empty_sentence", "field 'sentence' must be a non-empty string")
        beam_size = body.get("beam_size", 6)
        alpha = body.get("alpha", 0.7)
        seed = body.get("seed", 0)
        template_name = body.get("template")
        if not isinstance(beam_size, int) or beam_size < 1:
            return _error(400, "bad_beam_size", "beam_size must be an integer >= 1")
        if not isinstance(alpha, (int, float)) or alpha < 0:
            return _error(400, "bad_alpha", "alpha must be a number >= 0")
        if not isinstance(seed, int):
            return _error(400, "bad_seed", "seed must be an integer")

        forced = None
        if template_name is not None:
            try:
                forced = catalog.index_of(template_name)
            except UnknownTemplate:
                return _error(422, "unknown_template", f"unknown template {template_name!r}")

        params = DecodeParams(beam_size=beam_size, alpha=float(alpha), forced_template=forced)
        result = generate_meme(sentence, selector, generator, vocab, catalog,
                               tags, params, seed=seed)
        entry = catalog.entries[result.template_id]
        png = _render_png(entry, result.caption, result.variant_index, font)

        response = {
            "template": entry.name,
            "probability": result.selection_prob,
            "templates": [
                {"name": catalog.entries[t].name, "probability": p}
                for t, p in result.ranked_templates[:DEFAULT_TOP_K]
            ],
            "caption": result.caption,
            "score": result.score,
            "latency_ms": round((time.time() - t_start) * 1000.0, 3),
        }
        if request.query_params.get("format") == "url" and media_dir is not None:
            name = f"meme-{uuid.uuid4().hex}.png"
            Path(media_dir).mkdir(parents=True, exist_ok=True)
            (Path(media_dir) / name).write_bytes(png)
            response["image_url"] = f"/media/{name}"
        else:
            response["image"] = base64.b64encode(png).decode("ascii")
        return response

    if media_dir is not None:
        Path(media_dir).mkdir(parents=True, exist_ok=True)
        app.mount("/media", StaticFiles(directory=media_dir), name="media")
    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")
    return app


def serve(selector_path, generator_path, catalog_path, host="127.0.0.1", port=8000,
          static_dir=None, media_dir=None):
    import uvicorn

    app = create_app(selector_path, generator_path, catalog_path,
                     static_dir=static_dir, media_dir=media_dir)
    uvicorn.run(app, host=host, port=port)
