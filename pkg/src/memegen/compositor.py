"""Burn captions onto template images with an embedded fixed-size bitmap
font, so rendering is pixel-deterministic on every platform."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .corpus import CaptionBox, CatalogEntry

FONT_MAGIC = b"MBF1"


class BoxOutOfBounds(ValueError):
    pass


class MissingImage(FileNotFoundError):
    pass


class WriteFailure(OSError):
    pass


# Classic 5x7 LCD font, 5 column bytes per glyph, bit k of a column = row k
# (top row is bit 0). Covers printable ASCII 32..126.
_FONT5X7 = {
    " ": (0x00, 0x00, 0x00, 0x00, 0x00), "!": (0x00, 0x00, 0x5F, 0x00, 0x00),
    '"': (0x00, 0x07, 0x00, 0x07, 0x00), "#": (0x14, 0x7F, 0x14, 0x7F, 0x14),
    "$": (0x24, 0x2A, 0x7F, 0x2A, 0x12), "%": (0x23, 0x13, 0x08, 0x64, 0x62),
    "&": (0x36, 0x49, 0x55, 0x22, 0x50), "'": (0x00, 0x05, 0x03, 0x00, 0x00),
    "(": (0x00, 0x1C, 0x22, 0x41, 0x00), ")": (0x00, 0x41, 0x22, 0x1C, 0x00),
    "*": (0x14, 0x08, 0x3E, 0x08, 0x14), "+": (0x08, 0x08, 0x3E, 0x08, 0x08),
    ",": (0x00, 0x50, 0x30, 0x00, 0x00), "-": (0x08, 0x08, 0x08, 0x08, 0x08),
    ".": (0x00, 0x60, 0x60, 0x00, 0x00), "/": (0x20, 0x10, 0x08, 0x04, 0x02),
    "0": (0x3E, 0x51, 0x49, 0x45, 0x3E), "1": (0x00, 0x42, 0x7F, 0x40, 0x00),
    "2": (0x42, 0x61, 0x51, 0x49, 0x46), "3": (0x21, 0x41, 0x45, 0x4B, 0x31),
    "4": (0x18, 0x14, 0x12, 0x7F, 0x10), "5": (0x27, 0x45, 0x45, 0x45, 0x39),
    "6": (0x3C, 0x4A, 0x49, 0x49, 0x30), "7": (0x01, 0x71, 0x09, 0x05, 0x03),
    "8": (0x36, 0x49, 0x49, 0x49, 0x36), "9": (0x06, 0x49, 0x49, 0x29, 0x1E),
    ":": (0x00, 0x36, 0x36, 0x00, 0x00), ";": (0x00, 0x56, 0x36, 0x00, 0x00),
    "<": (0x08, 0x14, 0x22, 0x41, 0x00), "=": (0x14, 0x14, 0x14, 0x14, 0x14),
    ">": (0x00, 0x41, 0x22, 0x14, 0x08), "?": (0x02, 0x01, 0x51, 0x09, 0x06),
    "@": (0x32, 0x49, 0x79, 0x41, 0x3E), "A": (0x7E, 0x11, 0x11, 0x11, 0x7E),
    "B": (0x7F, 0x49, 0x49, 0x49, 0x36), "C": (0x3E, 0x41, 0x41, 0x41, 0x22),
    "D": (0x7F, 0x41, 0x41, 0x22, 0x1C), "E": (0x7F, 0x49, 0x49, 0x49, 0x41),
    "F": (0x7F, 0x09, 0x09, 0x09, 0x01), "G": (0x3E, 0x41, 0x49, 0x49, 0x7A),
    "H": (0x7F, 0x08, 0x08, 0x08, 0x7F), "I": (0x00, 0x41, 0x7F, 0x41, 0x00),
    "J": (0x20, 0x40, 0x41, 0x3F, 0x01), "K": (0x7F, 0x08, 0x14, 0x22, 0x41),
    "L": (0x7F, 0x40, 0x40, 0x40, 0x40), "M": (0x7F, 0x02, 0x0C, 0x02, 0x7F),
    "N": (0x7F, 0x04, 0x08, 0x10, 0x7F), "O": (0x3E, 0x41, 0x41, 0x41, 0x3E),
    "P": (0x7F, 0x09, 0x09, 0x09, 0x06), "Q": (0x3E, 0x41, 0x51, 0x21, 0x5E),
    "R": (0x7F, 0x09, 0x19, 0x29, 0x46), "S": (0x46, 0x49, 0x49, 0x49, 0x31),
    "T": (0x01, 0x01, 0x7F, 0x01, 0x01), "U": (0x3F, 0x40, 0x40, 0x40, 0x3F),
    "V": (0x1F, 0x20, 0x40, 0x20, 0x1F), "W": (0x3F, 0x40, 0x38, 0x40, 0x3F),
    "X": (0x63, 0x14, 0x08, 0x14, 0x63), "Y": (0x07, 0x08, 0x70, 0x08, 0x07),
    "Z": (0x61, 0x51, 0x49, 0x45, 0x43), "[": (0x00, 0x7F, 0x41, 0x41, 0x00),
    "\\": (0x02, 0x04, 0x08, 0x10, 0x20), "]": (0x00, 0x41, 0x41, 0x7F, 0x00),
    "^": (0x04, 0x02, 0x01, 0x02, 0x04), "_": (0x40, 0x40, 0x40, 0x40, 0x40),
    "`": (0x00, 0x01, 0x02, 0x04, 0x00), "a": (0x20, 0x54, 0x54, 0x54, 0x78),
    "b": (0x7F, 0x48, 0x44, 0x44, 0x38), "c": (0x38, 0x44, 0x44, 0x44, 0x20),
    "d": (0x38, 0x44, 0x44, 0x48, 0x7F), "e": (0x38, 0x54, 0x54, 0x54, 0x18),
    "f": (0x08, 0x7E, 0x09, 0x01, 0x02), "g": (0x0C, 0x52, 0x52, 0x52, 0x3E),
    "h": (0x7F, 0x08, 0x04, 0x04, 0x78), "i": (0x00, 0x44, 0x7D, 0x40, 0x00),
    "j": (0x20, 0x40, 0x44, 0x3D, 0x00), "k": (0x7F, 0x10, 0x28, 0x44, 0x00),
    "l": (0x00, 0x41, 0x7F, 0x40, 0x00), "m": (0x7C, 0x04, 0x18, 0x04, 0x78),
    "n": (0x7C, 0x08, 0x04, 0x04, 0x78), "o": (0x38, 0x44, 0x44, 0x44, 0x38),
    "p": (0x7C, 0x14, 0x14, 0x14, 0x08), "q": (0x08, 0x14, 0x14, 0x18, 0x7C),
    "r": (0x7C, 0x08, 0x04, 0x04, 0x08), "s": (0x48, 0x54, 0x54, 0x54, 0x20),
    "t": (0x04, 0x3F, 0x44, 0x40, 0x20), "u": (0x3C, 0x40, 0x40, 0x20, 0x7C),
    "v": (0x1C, 0x20, 0x40, 0x20, 0x1C), "w": (0x3C, 0x40, 0x30, 0x40, 0x3C),
    "x": (0x44, 0x28, 0x10, 0x28, 0x44), "y": (0x0C, 0x50, 0x50, 0x50, 0x3C),
    "z": (0x44, 0x64, 0x54, 0x4C, 0x44), "{": (0x00, 0x08, 0x36, 0x41, 0x00),
    "|": (0x00, 0x00, 0x7F, 0x00, 0x00), "}": (0x00, 0x41, 0x36, 0x08, 0x00),
    "~": (0x08, 0x08, 0x2A, 0x1C, 0x08),
}

FALLBACK_CHAR = "?"


@dataclass(frozen=True)
class Glyph:
    advance: int
    rows: tuple[int, ...]  # one bitmask per row, MSB = leftmost pixel


class BitmapFont:
    def __init__(self, height: int, glyphs: dict[int, Glyph]):
        self.height = height
        self.glyphs = glyphs
        if ord(FALLBACK_CHAR) not in glyphs:
            raise ValueError("font needs a fallback glyph")

    def glyph(self, char: str) -> Glyph:
        return self.glyphs.get(ord(char), self.glyphs[ord(FALLBACK_CHAR)])

    def text_width(self, text: str) -> int:
        return sum(self.glyph(c).advance for c in text)

    @classmethod
    def default(cls) -> "BitmapFont":
        glyphs = {}
        for char, cols in _FONT5X7.items():
            rows = []
            for r in range(7):
                bits = 0
                for c, col in enumerate(cols):
                    if (col >> r) & 1:
                        bits |= 0x80 >> c
                rows.append(bits)
            glyphs[ord(char)] = Glyph(advance=6, rows=tuple(rows))
        return cls(7, glyphs)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(FONT_MAGIC)
            f.write(struct.pack("<B", self.height))
            for cp in sorted(self.glyphs):
                g = self.glyphs[cp]
                f.write(struct.pack("<IB", cp, g.advance))
                f.write(bytes(g.rows))

    @classmethod
    def load(cls, path) -> "BitmapFont":
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != FONT_MAGIC:
            raise ValueError("not a bitmap font file")
        height = blob[4]
        glyphs = {}
        off = 5
        record = 5 + height
        while off + record <= len(blob):
            cp, advance = struct.unpack_from("<IB", blob, off)
            rows = tuple(blob[off + 5:off + record])
            glyphs[cp] = Glyph(advance, rows)
            off += record
        if off != len(blob):
            raise ValueError("trailing bytes in font file")
        return cls(height, glyphs)


@dataclass
class RenderSpec:
    caption: str
    box: CaptionBox
    fill: tuple[int, int, int] = (255, 255, 255)
    outline: tuple[int, int, int] = (0, 0, 0)
    line_spacing: int = 2
    uppercase: bool = True


def wrap_text(caption: str, font: BitmapFont, box_width: int) -> list[str]:
    """Greedy word wrap; words wider than the box are hard-broken."""
    if box_width < max(g.advance for g in font.glyphs.values()):
        raise ValueError("box narrower than the widest glyph")
    words = caption.split()
    lines: list[str] = []
    current = ""
    for word in words:
        while font.text_width(word) > box_width:
            # hard-break: peel off the widest prefix that fits
            cut = 1
            while cut < len(word) and font.text_width(word[:cut + 1]) <= box_width:
                cut += 1
            if current:
                lines.append(current)
                current = ""
            lines.append(word[:cut])
            word = word[cut:]
        if not word:
            continue
        candidate = word if not current else current + " " + word
        if font.text_width(candidate) <= box_width:
            current = candidate
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Edge-padded (non-wrapping) boolean shift."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def render_caption(pixels: np.ndarray, spec: RenderSpec, font: BitmapFont) -> np.ndarray:
    """Draw the caption into a copy of `pixels` (H, W, 3 uint8): centered
    lines stacked from the box top, white fill with a 1px black outline.
    Nothing outside the box is touched."""
    h, w = pixels.shape[:2]
    box = spec.box
    if box.x < 0 or box.y < 0 or box.x + box.w > w or box.y + box.h > h:
        raise BoxOutOfBounds(f"box {box} outside {w}x{h} image")
    text = spec.caption.upper() if spec.uppercase else spec.caption
    if not text.strip():
        return pixels.copy()

    fill_mask = np.zeros((h, w), dtype=bool)
    line_h = font.height + spec.line_spacing
    for li, line in enumerate(wrap_text(text, font, box.w)):
        y0 = box.y + li * line_h
        x = box.x + (box.w - font.text_width(line)) // 2
        for char in line:
            g = font.glyph(char)
            for r, bits in enumerate(g.rows):
                for c in range(8):
                    if bits & (0x80 >> c) and 0 <= y0 + r < h and 0 <= x + c < w:
                        fill_mask[y0 + r, x + c] = True
            x += g.advance

    # 1px outline: 8-neighborhood dilation minus the fill itself
    dilated = np.zeros_like(fill_mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            dilated |= _shift(fill_mask, dy, dx)
    outline_mask = dilated & ~fill_mask

    # clip both masks to the caption box
    box_mask = np.zeros_like(fill_mask)
    box_mask[box.y:box.y + box.h, box.x:box.x + box.w] = True
    fill_mask &= box_mask
    outline_mask &= box_mask

    out = pixels.copy()
    out[outline_mask] = spec.outline
    out[fill_mask] = spec.fill
    return out


def compose_meme(entry: CatalogEntry, caption: str, variant_index: int,
                 out_path, font: BitmapFont | None = None):
    """Load the template image variant, burn the caption, write a PNG."""
    if not 0 <= variant_index < len(entry.image_paths):
        raise MissingImage(f"variant {variant_index} out of range for {entry.name!r}")
    src = entry.image_paths[variant_index]
    try:
        image = Image.open(src).convert("RGB")
    except FileNotFoundError:
        raise MissingImage(f"missing template image {src}") from None
    font = font or BitmapFont.default()
    pixels = np.asarray(image)
    rendered = render_caption(pixels, RenderSpec(caption, entry.caption_box), font)
    try:
        Image.fromarray(rendered).save(out_path, format="PNG", compress_level=6)
    except OSError as exc:
        raise WriteFailure(str(exc)) from exc
    return out_path
