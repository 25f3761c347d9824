"""Packaged data files (lexicons, font) and a desk-scale demo dataset
generator used by the quickstart, the tests, and the service fixtures."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .compositor import BitmapFont
from .corpus import SentimentLexicon
from .text import TagLexicon

_DATA = resources.files("memegen") / "data"


def default_sentiment_lexicon() -> SentimentLexicon:
    with resources.as_file(_DATA / "sentiment_lexicon.tsv") as p:
        return SentimentLexicon.load(p)


def default_tag_lexicon() -> TagLexicon:
    with resources.as_file(_DATA / "tag_lexicon.tsv") as p:
        return TagLexicon.load(p)


def default_font() -> BitmapFont:
    font_file = _DATA / "default_font.mbf"
    if font_file.is_file():
        with resources.as_file(font_file) as p:
            return BitmapFont.load(p)
    return BitmapFont.default()


# -- demo dataset ----------------------------------------------------------

_DEMO_TEMPLATES = [
    ("Success Kid", (52, 120, 46), "top"),
    ("Matrix Morpheus", (24, 36, 80), "bottom"),
    ("Doge", (196, 160, 70), "top"),
    ("Surprised Pikachu", (220, 190, 40), "bottom"),
]

_DEMO_CAPTIONS = {
    "Success Kid": [
        "when you win your first fortnite game",
        "won the lottery on the first try",
        "finished the whole project before friday",
        "found money in my old jacket",
        "first try and the code works",
        "beat the final boss on the first attempt",
    ],
    "Matrix Morpheus": [
        "what if i told you the weekend is only two days",
        "what if i told you memes are art",
        "what if i told you the bug was a feature",
        "what if i told you mondays are optional",
        "what if i told you the cake is real",
        "what if i told you sleep fixes everything",
    ],
    "Doge": [
        "much work very tired wow",
        "such meme very funny wow",
        "much code very bug wow",
        "such friday very relax wow",
        "much pizza very happy wow",
        "such win very amaze wow",
    ],
    "Surprised Pikachu": [
        "stayed up all night then felt tired",
        "ate the whole cake then felt sick",
        "skipped the meeting then missed the news",
        "ignored the alarm then missed the bus",
        "spent all money then went broke",
        "never studied then failed the test",
    ],
}


def _template_image(rgb, size=(240, 240), seed=0):
    """Flat-color template with a deterministic dither pattern so variants
    are visually distinct."""
    rng = np.random.default_rng(seed)
    base = np.zeros(size + (3,), dtype=np.uint8)
    base[:] = rgb
    noise = rng.integers(-18, 18, size=size + (1,))
    return np.clip(base.astype(int) + noise, 0, 255).astype(np.uint8)


def build_demo_dataset(root, captions_per_template: int = 25, seed: int = 0) -> dict:
    """Write a small catalog (images included) and corpus under `root`.

    Returns {"catalog": path, "corpus": path}. Captions cycle through the
    per-template pools with a numbered suffix so the corpus can be any size.
    """
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for ti, (name, rgb, position) in enumerate(_DEMO_TEMPLATES):
        paths = []
        for vi in range(2):
            img_path = images_dir / f"{name.lower().replace(' ', '_')}_{vi}.png"
            Image.fromarray(_template_image(rgb, seed=seed * 100 + ti * 10 + vi)).save(
                img_path, format="PNG", compress_level=6)
            paths.append(str(img_path))
        box_y = 8 if position == "top" else 160
        entries.append({
            "name": name,
            "images": paths,
            "caption_box": {"x": 8, "y": box_y, "w": 224, "h": 72},
            "position": position,
        })

    catalog_path = root / "catalog.json"
    catalog_path.write_text(json.dumps({"templates": entries}, indent=2))

    corpus_path = root / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as f:
        for name, _, _ in _DEMO_TEMPLATES:
            pool = _DEMO_CAPTIONS[name]
            for i in range(captions_per_template):
                caption = pool[i % len(pool)]
                if i >= len(pool):
                    caption = f"{caption} {i // len(pool)}"
                f.write(json.dumps({"template": name, "caption": caption}) + "\n")
    return {"catalog": str(catalog_path), "corpus": str(corpus_path)}
