import re

import pytest

from cgforensics import democorpus
from cgforensics.backbone import load_backbone
from cgforensics.evalkit import read_manifest
from cgforensics.standin import build_standin

_CRITERION = re.compile(r"test_(p\d+)_(\w+)")


def pytest_runtest_logreport(report):
    # acceptance criteria announce one verdict line each on the terminal
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    print("\n%s %s  %s (%.1fs)" % (m.group(1).upper(), verdict,
                                   m.group(2).replace("_", " "), report.duration))


@pytest.fixture(scope="session")
def backbone_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("bb") / "backbone.onnx"
    build_standin(str(path), seed=3)
    return str(path)


@pytest.fixture(scope="session")
def backbone(backbone_path):
    return load_backbone(backbone_path)


@pytest.fixture(scope="session")
def corpus_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return democorpus.generate(str(out), per_class=40, seed=0)


@pytest.fixture(scope="session")
def corpus_records(corpus_manifest):
    return read_manifest(corpus_manifest)


@pytest.fixture(scope="session")
def bundled_images(corpus_records):
    # 20 images spread across all three classes
    step = max(1, len(corpus_records) // 20)
    picked = corpus_records[::step][:20]
    assert len({r.label for r in picked}) == 3
    return picked
