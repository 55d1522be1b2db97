import numpy as np
import pytest
import torch

from mtsfusion.data import Dataset, FeatureSchema, FeatureSpec, PatientSample

torch.set_num_threads(1)


def make_dataset(n=40, D=2, seed=0, lengths=(3, 8), with_cat=True, pos_rate=0.5):
    """Small mixed-type dataset for unit tests."""
    rng = np.random.default_rng(seed)
    static = [FeatureSpec("age", "numeric"), FeatureSpec("sex", "binary")]
    if with_cat:
        static.append(FeatureSpec("origin", "categorical", ("a", "b", "c")))
    mts = tuple(FeatureSpec(f"m{d}", "binary" if d % 2 == 0 else "count") for d in range(D))
    schema = FeatureSchema(tuple(static), mts)
    n_pos = int(round(pos_rate * n))
    labels = np.array([1] * n_pos + [0] * (n - n_pos))
    rng.shuffle(labels)
    samples = []
    for i in range(n):
        T = int(rng.integers(lengths[0], lengths[1] + 1))
        X = np.zeros((D, T))
        for d in range(D):
            X[d] = rng.integers(0, 2, T) if d % 2 == 0 else rng.poisson(2.0, T)
        vals = [float(rng.normal(60, 10)), float(rng.integers(0, 2))]
        if with_cat:
            vals.append(str(rng.choice(["a", "b", "c"])))
        samples.append(PatientSample(f"p{i}", tuple(vals), X, int(labels[i])))
    return Dataset(schema, tuple(samples))


@pytest.fixture
def small_ds():
    return make_dataset()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
