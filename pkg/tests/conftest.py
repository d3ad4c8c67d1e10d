import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dramorigin import simgen  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def profiles():
    return simgen.default_profiles()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, profiles):
    """3 classes x 2 modules x 48 rows, written to disk once per session."""
    out = tmp_path_factory.mktemp("corpus")
    entries = simgen.generate_corpus(profiles[:3], 2, 48, 7, out)
    return out, entries


def simulated_module(profile, module_seed, rows, read_seed=1, module_id=None):
    entry = simgen.CorpusEntry("", module_id or f"class{profile.class_tag}-s{module_seed}",
                               profile.class_tag, module_seed, read_seed)
    return list(simgen.module_pages(profile, entry, rows))


@pytest.fixture(scope="session")
def class1_model(profiles):
    """Class-1 SVDD model trained on two simulated modules (256 rows each)."""
    from dramorigin import features, pipeline

    rows = []
    for seed in (101, 102):
        groups = features.group_pages(simulated_module(profiles[0], seed, 256))
        rows += [features.extract_features(groups[k]) for k in sorted(groups)]
    model, _ = pipeline.build_model(np.array(rows), 1, [0.1], [2.0**-8])
    return model


ACCEPTANCE = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)``; printed in the terminal summary."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
