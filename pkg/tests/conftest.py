import pytest

from familytune.fixtures import bert_large_like, resnet50_like, tiny_model


@pytest.fixture(scope="session")
def bert():
    return bert_large_like()


@pytest.fixture(scope="session")
def resnet():
    return resnet50_like()


@pytest.fixture(scope="session")
def tiny():
    return tiny_model()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
