"""Command line entry points: training, generation, evaluation, reports,
and the HTTP service.

Exit codes: 0 success, 2 bad config/flags, 3 bad data/files, 4 unknown
template.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .corpus import (BadRatios, MalformedLine, SentimentLexicon, TemplateCatalog,
                     UnknownTemplate, corpus_stats, load_corpus, split_corpus)
from .evaluation import (IncompleteRatings, aggregate_ratings, bleu, cohen_kappa,
                         load_ratings, rating_pairs, score_distribution)
from .neural import ModelConfig
from .text import build_vocab

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TEMPLATE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _data_dir() -> Path:
    return Path(os.environ.get("MEMEBOT_DATA_DIR", "."))


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        _fail(EXIT_CONFIG, f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_CONFIG, f"config {path} is not valid JSON: {exc}")
    return raw


def _build_settings(raw):
    from .models import TrainSettings

    try:
        config = ModelConfig(
            n_layers=raw.get("N", 2), d_model=raw.get("d_model", 128),
            d_ff=raw.get("d_ff", 512), h=raw.get("h", 4),
            p_drop=raw.get("P_drop", 0.1), vocab_size=1, max_len=raw.get("max_len", 32))
        settings = TrainSettings(
            lr=raw.get("lr", 1e-3), eta_min=raw.get("eta_min", 1e-5),
            t_0=raw.get("T_0", 200), t_mult=raw.get("T_mult", 2),
            batch_size=raw.get("batch_size", 32), epochs=raw.get("epochs", 10),
            seed=raw.get("seed", 0))
    except (ValueError, TypeError) as exc:
        _fail(EXIT_CONFIG, f"bad training configuration: {exc}")
    return config, settings


def _load_training_data(data, catalog_path, raw_config):
    try:
        catalog = TemplateCatalog.load(catalog_path)
    except FileNotFoundError:
        _fail(EXIT_DATA, f"catalog file not found: {catalog_path}")
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        _fail(EXIT_DATA, f"bad catalog {catalog_path}: {exc}")
    try:
        samples = load_corpus(data, catalog)
    except FileNotFoundError:
        _fail(EXIT_DATA, f"data file not found: {data}")
    except (MalformedLine, UnknownTemplate) as exc:
        _fail(EXIT_DATA, f"bad corpus {data}: {exc}")
    try:
        split = split_corpus(samples, tuple(raw_config.get("split", (0.8, 0.1, 0.1))),
                             raw_config.get("seed", 0))
    except BadRatios as exc:
        _fail(EXIT_CONFIG, str(exc))
    vocab = build_vocab(samples, catalog, raw_config.get("min_freq", 1))
    return catalog, split, vocab


@click.group()
def main():
    """Sentence-to-meme pipeline tools."""


@main.command("train-selector")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def cli_train_selector(config_path, data, catalog_path, out):
    """Train the template-selection classifier."""
    from .models import save_checkpoint, train_selector

    raw = _load_config(config_path)
    catalog_path = catalog_path or _data_dir() / "catalog.json"
    catalog, split, vocab = _load_training_data(data, catalog_path, raw)
    config, settings = _build_settings(raw)
    config.vocab_size = len(vocab)

    model, report = train_selector(
        split, config, vocab, settings, len(catalog),
        log=lambda s: click.echo(
            f"epoch {s.epoch}: train {s.train_loss:.4f} val {s.val_loss:.4f} "
            f"acc {s.val_accuracy:.3f} f1 {s.val_macro_f1:.3f}", err=True))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "selector.ckpt"
    save_checkpoint(model, vocab, ckpt, {"seed": settings.seed,
                                         "best_val_loss": report.best_val_loss})
    report.checkpoint_path = str(ckpt)
    (out / "selector_report.json").write_text(report.to_json())
    click.echo(report.to_json())


@main.command("train-generator")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def cli_train_generator(config_path, data, catalog_path, out):
    """Train the caption generator (MT2MC or SMT2MC)."""
    from .assets import default_tag_lexicon
    from .models import VARIANTS, save_checkpoint, train_generator

    raw = _load_config(config_path)
    variant = raw.get("variant", "SMT2MC")
    if variant not in VARIANTS:
        _fail(EXIT_CONFIG, f"variant must be one of {VARIANTS}, got {variant!r}")
    catalog_path = catalog_path or _data_dir() / "catalog.json"
    catalog, split, vocab = _load_training_data(data, catalog_path, raw)
    config, settings = _build_settings(raw)
    config.vocab_size = len(vocab)

    model, report = train_generator(
        split, variant, raw.get("np_plus_v", True), config, vocab,
        default_tag_lexicon(), settings,
        log=lambda s: click.echo(
            f"epoch {s.epoch}: train {s.train_loss:.4f} val {s.val_loss:.4f}", err=True))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "generator.ckpt"
    save_checkpoint(model, vocab, ckpt, {"seed": settings.seed, "variant": variant,
                                         "np_plus_v": raw.get("np_plus_v", True),
                                         "best_val_loss": report.best_val_loss})
    report.checkpoint_path = str(ckpt)
    (out / "generator_report.json").write_text(report.to_json())
    click.echo(report.to_json())


@main.command("generate")
@click.argument("sentence")
@click.option("--selector", "selector_path", default=None, type=click.Path())
@click.option("--generator", "generator_path", default=None, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--template", default=None, help="Force a template by name.")
@click.option("--beam", default=6, type=int)
@click.option("--alpha", default=0.7, type=float)
@click.option("--seed", default=0, type=int)
@click.option("-o", "--out", "out_path", required=True, type=click.Path())
def cli_generate(sentence, selector_path, generator_path, catalog_path, template,
                 beam, alpha, seed, out_path):
    """Generate a meme PNG for SENTENCE and print a JSON summary."""
    from .assets import default_font, default_tag_lexicon
    from .generation import DecodeParams, generate_meme
    from .models import load_checkpoint

    if beam < 1 or alpha < 0:
        _fail(EXIT_CONFIG, "need --beam >= 1 and --alpha >= 0")
    root = _data_dir()
    selector_path = selector_path or root / "selector.ckpt"
    generator_path = generator_path or root / "generator.ckpt"
    catalog_path = catalog_path or root / "catalog.json"
    try:
        catalog = TemplateCatalog.load(catalog_path)
        selector, vocab, _ = load_checkpoint(selector_path)
        generator, gvocab, meta = load_checkpoint(generator_path)
    except FileNotFoundError as exc:
        _fail(EXIT_DATA, str(exc))

    forced = None
    if template is not None:
        try:
            forced = catalog.index_of(template)
        except UnknownTemplate as exc:
            _fail(EXIT_TEMPLATE, str(exc))

    params = DecodeParams(beam_size=beam, alpha=alpha, forced_template=forced)
    result = generate_meme(sentence, selector, generator, gvocab, catalog,
                           default_tag_lexicon(), params, seed=seed,
                           np_plus_v=meta.get("np_plus_v", True),
                           out_path=out_path, font=default_font())
    click.echo(json.dumps({
        "template": catalog.entries[result.template_id].name,
        "probability": result.selection_prob,
        "caption": result.caption,
        "score": result.score,
        "image": str(out_path),
    }))


def _read_token_lines(path):
    try:
        with open(path, encoding="utf-8") as f:
            return [line.split() for line in f if line.strip()]
    except FileNotFoundError:
        _fail(EXIT_DATA, f"file not found: {path}")


@main.command("eval-bleu")
@click.option("--hyp", required=True, type=click.Path())
@click.option("--ref", required=True, type=click.Path())
@click.option("--no-smooth", is_flag=True, default=False)
def cli_eval_bleu(hyp, ref, no_smooth):
    """Corpus BLEU-1..4 between two line-aligned token files."""
    hyps, refs = _read_token_lines(hyp), _read_token_lines(ref)
    try:
        report = bleu(hyps, refs, smooth=not no_smooth)
    except ValueError as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(json.dumps(report.to_dict()))


def _ratings_or_fail(path):
    try:
        return load_ratings(path)
    except FileNotFoundError:
        _fail(EXIT_DATA, f"ratings file not found: {path}")
    except (KeyError, ValueError) as exc:
        _fail(EXIT_DATA, f"bad ratings file {path}: {exc}")


@main.command("eval-kappa")
@click.option("--ratings", required=True, type=click.Path())
@click.option("--metric", type=click.Choice(["coherence", "relevance", "likes"]),
              default="coherence")
def cli_eval_kappa(ratings, metric):
    """Two-rater Cohen's kappa for one rating metric."""
    records = _ratings_or_fail(ratings)
    try:
        result = cohen_kappa(rating_pairs(records, metric))
    except (IncompleteRatings, ValueError) as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(json.dumps({"metric": metric, **result.to_dict()}))


@main.command("eval-ratings")
@click.option("--ratings", required=True, type=click.Path())
def cli_eval_ratings(ratings):
    """Aggregate two-rater coherence/relevance/likes scores."""
    records = _ratings_or_fail(ratings)
    try:
        summary = aggregate_ratings(records)
    except IncompleteRatings as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(json.dumps(summary.to_dict()))


@main.command("report")
@click.option("--data", required=True, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--ratings", "ratings_path", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def cli_report(data, catalog_path, ratings_path, out):
    """Corpus and rating reports: CSV tables plus rendered figures."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    catalog_path = catalog_path or _data_dir() / "catalog.json"
    try:
        catalog = TemplateCatalog.load(catalog_path)
        samples = load_corpus(data, catalog)
    except FileNotFoundError as exc:
        _fail(EXIT_DATA, str(exc))
    except (MalformedLine, UnknownTemplate) as exc:
        _fail(EXIT_DATA, str(exc))

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    counts = corpus_stats(samples, catalog)
    with open(out / "template_counts.csv", "w", encoding="utf-8") as f:
        f.write("template,captions\n")
        for name, count in counts.items():
            f.write(f"{name},{count}\n")
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(counts)), list(counts.values()), color="#4477aa")
    ax.set_xticks(range(len(counts)))
    ax.set_xticklabels(list(counts.keys()), rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("captions")
    ax.set_title("Caption count per template")
    fig.tight_layout()
    fig.savefig(out / "template_counts.png", dpi=120)
    plt.close(fig)
    written = ["template_counts.csv", "template_counts.png"]

    if ratings_path is not None:
        records = _ratings_or_fail(ratings_path)
        try:
            summary = aggregate_ratings(records)
            dist = score_distribution(records)
        except IncompleteRatings as exc:
            _fail(EXIT_DATA, str(exc))
        with open(out / "rating_summary.csv", "w", encoding="utf-8") as f:
            f.write("metric,value\n")
            for key, value in summary.to_dict().items():
                f.write(f"{key},{value}\n")
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
        for ax, metric in zip(axes, ("coherence", "relevance")):
            hist = dist[metric]
            ax.bar([str(k) for k in hist], list(hist.values()), color="#cc6677")
            ax.set_title(metric)
            ax.set_xlabel("score")
        axes[0].set_ylabel("memes")
        fig.tight_layout()
        fig.savefig(out / "score_distribution.png", dpi=120)
        plt.close(fig)
        written += ["rating_summary.csv", "score_distribution.png"]
    click.echo(json.dumps({"out": str(out), "files": written}))


@main.command("make-demo-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--captions-per-template", default=25, type=int)
@click.option("--seed", default=0, type=int)
def cli_make_demo_data(out, captions_per_template, seed):
    """Materialize the built-in desk-scale catalog and corpus."""
    from .assets import build_demo_dataset

    paths = build_demo_dataset(out, captions_per_template, seed)
    click.echo(json.dumps(paths))


@main.command("serve")
@click.option("--selector", "selector_path", default=None, type=click.Path())
@click.option("--generator", "generator_path", default=None, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.option("--static-dir", default=None, type=click.Path())
@click.option("--media-dir", default=None, type=click.Path())
def cli_serve(selector_path, generator_path, catalog_path, host, port, static_dir, media_dir):
    """Run the HTTP API (and optionally serve the web UI)."""
    from .service import serve

    root = _data_dir()
    try:
        serve(selector_path or root / "selector.ckpt",
              generator_path or root / "generator.ckpt",
              catalog_path or root / "catalog.json",
              host=host, port=port, static_dir=static_dir, media_dir=media_dir)
    except FileNotFoundError as exc:
        _fail(EXIT_DATA, str(exc))


if __name__ == "__main__":
    main()
