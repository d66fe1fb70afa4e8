import pytest

from medie.features import FeatureConfig
from medie.optim import TrainConfig
from medie.pipeline import train_pipeline
from medie.scheme import builtin_scheme
from medie.synth import generate, load_generator_config

QUICK_FEATURES = FeatureConfig(window=2, hash_dim=2 ** 16, bigrams=False)
QUICK_TRAIN = TrainConfig(learning_rate=0.02, batch_size=16, max_epochs=6, patience=3)


@pytest.fixture(scope="session")
def synthetic_corpus():
    return generate(load_generator_config(n_records=40, seed=11))


@pytest.fixture(scope="session")
def small_bundle(synthetic_corpus):
    docs = list(synthetic_corpus)
    return train_pipeline(docs[:60], docs[60:], QUICK_TRAIN, QUICK_TRAIN, QUICK_FEATURES, builtin_scheme())


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines collected by ``test_acceptance``."""
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
