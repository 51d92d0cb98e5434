import numpy as np
import pytest

from zimediate import estimator
from zimediate.data import Dataset
from zimediate.distributions import sample_true_mediator
from zimediate.false_zero import FalseZeroMechanism
from zimediate.outcome import outcome_mean
from zimediate.params import Theta

# Every EM fit run anywhere in the session: (family, min step of the loglik trace).
FIT_LOG = []
# Lines printed in the terminal summary by the acceptance module.
ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True, scope="session")
def _record_fits():
    original = estimator.fit

    def recording_fit(dataset, family, config=None):
        res = original(dataset, family, config)
        FIT_LOG.append((res.family.label, res.min_trace_step()))
        return res

    estimator.fit = recording_fit
    import zimediate.selection as selection

    selection.fit = recording_fit
    yield
    estimator.fit = original
    selection.fit = original


def pytest_collection_modifyitems(items):
    # acceptance checks run last so the ascent check sees every fit in the session
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


THETAS = {
    "zilon": Theta.build("zilon", (1.0, 0.4, 1.5, 0.5, 0.3, 0.0), 1.0, (1.0, 0.3),
                         (-0.3, -0.6), 0.5, sigma=0.7),
    "zinb": Theta.build("zinb", (0.0, 0.15, 1.5, 0.5, 0.3, 0.0), 1.0, (np.log(5.0), 0.3),
                        (-1.2, -0.6), 0.45, r=2.0),
    "zip": Theta.build("zip", (0.0, 0.15, 1.5, 0.5, 0.3, 0.0), 1.0, (np.log(5.0), 0.3),
                       (-1.0, -0.6), 0.4),
}


def simulate_data(theta, n, seed, z_coef=None):
    """Draw (y, m*, x[, z]) from theta with standard normal exposure."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    if z_coef is None:
        m = sample_true_mediator(theta.family, theta.link, x, rng)
        y = outcome_mean(theta.outcome, x, m) + theta.outcome.delta * rng.standard_normal(n)
        ms = FalseZeroMechanism(theta.eta).observe(m, rng)
        return Dataset(y, ms, x)
    z = rng.standard_normal(n)
    zy, za, zg = z_coef
    m = sample_true_mediator(theta.family, theta.link, x, rng, offset_a=za * z, offset_g=zg * z)
    y = outcome_mean(theta.outcome, x, m, zy * z) + theta.outcome.delta * rng.standard_normal(n)
    ms = FalseZeroMechanism(theta.eta).observe(m, rng)
    return Dataset(y, ms, x, z[:, None])


@pytest.fixture(scope="session")
def thetas():
    return THETAS


@pytest.fixture(scope="session")
def small_fits():
    """One n=600 fit per family, shared by several test modules."""
    out = {}
    for i, (fam, th) in enumerate(THETAS.items()):
        ds = simulate_data(th, 600, 100 + i)
        out[fam] = (ds, estimator.fit(ds, fam))
    return out
