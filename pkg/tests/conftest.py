import numpy as np
import pytest

from memegen.assets import (build_demo_dataset, default_font, default_tag_lexicon)
from memegen.corpus import CorpusSplit, TemplateCatalog, load_corpus
from memegen.models import TrainSettings, train_generator, train_selector
from memegen.neural import ModelConfig
from memegen.text import build_vocab


_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1].removeprefix("test_").replace("_", " ")
        _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(
            f"{name}: {'PASS' if outcome == 'passed' else 'FAIL'}")


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    build_demo_dataset(root, captions_per_template=8, seed=0)
    return root


@pytest.fixture(scope="session")
def catalog(demo_dir):
    return TemplateCatalog.load(demo_dir / "catalog.json")


@pytest.fixture(scope="session")
def samples(demo_dir, catalog):
    return load_corpus(demo_dir / "corpus.jsonl", catalog)


@pytest.fixture(scope="session")
def vocab(samples, catalog):
    return build_vocab(samples, catalog, min_freq=1)


@pytest.fixture(scope="session")
def tag_lexicon():
    return default_tag_lexicon()


@pytest.fixture(scope="session")
def font():
    return default_font()


@pytest.fixture(scope="session")
def tiny_config(vocab):
    return ModelConfig(n_layers=2, d_model=64, d_ff=128, h=4, p_drop=0.0,
                       vocab_size=len(vocab), max_len=32)


@pytest.fixture(scope="session")
def trained_selector(samples, catalog, vocab, tiny_config):
    split = CorpusSplit(list(samples), [], [], 0)
    model, report = train_selector(
        split, tiny_config, vocab, TrainSettings(lr=3e-3, epochs=25, batch_size=8,
                                                 t_0=5000, seed=0), len(catalog))
    return model, report


@pytest.fixture(scope="session")
def trained_generator(samples, catalog, vocab, tiny_config, tag_lexicon):
    split = CorpusSplit(list(samples), [], [], 0)
    model, report = train_generator(
        split, "SMT2MC", True, tiny_config, vocab, tag_lexicon,
        TrainSettings(lr=3e-3, epochs=50, batch_size=8, t_0=5000, seed=0))
    return model, report


@pytest.fixture(scope="session")
def checkpoints(demo_dir, trained_selector, trained_generator, vocab, tmp_path_factory):
    from memegen.models import save_checkpoint

    out = tmp_path_factory.mktemp("ckpt")
    sel_path = out / "selector.ckpt"
    gen_path = out / "generator.ckpt"
    save_checkpoint(trained_selector[0], vocab, sel_path, {"seed": 0})
    save_checkpoint(trained_generator[0], vocab, gen_path,
                    {"seed": 0, "variant": "SMT2MC", "np_plus_v": True})
    return {"selector": sel_path, "generator": gen_path,
            "catalog": demo_dir / "catalog.json"}
