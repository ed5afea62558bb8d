import logging

import pytest

from boostaug.corpus import from_records


@pytest.fixture(autouse=True)
def _quiet_pipeline_warnings():
    logging.getLogger("boostaug").setLevel(logging.ERROR)
    yield


@pytest.fixture
def separable():
    """The 20-example two-word corpus used by several oracle tests."""
    recs = [("good", "pos")] * 10 + [("bad", "neg")] * 10
    return from_records(recs)


@pytest.fixture
def tiny_reviews():
    recs = [
        ("the food was good and the staff friendly", "pos"),
        ("a great place with lovely views", "pos"),
        ("good coffee and great cake", "pos"),
        ("friendly staff , good prices", "pos"),
        ("lovely room and a great bed", "pos"),
        ("the food was bad and the staff rude", "neg"),
        ("an awful place with dirty floors", "neg"),
        ("bad coffee and stale cake", "neg"),
        ("rude staff , terrible prices", "neg"),
        ("dirty room and an awful bed", "neg"),
    ]
    return from_records(recs)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
