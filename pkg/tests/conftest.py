import numpy as np
import pytest

from qfsum.model import ModelConfig, ModelParams
from qfsum.vocab import SPECIAL_TOKENS, Vocab


def criterion(label):
    """Tag an acceptance test so the reporter prints one line per criterion."""
    def wrap(fn):
        fn._criterion = label
        return fn
    return wrap


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = getattr(item.function, "_criterion", None)
    if rep.when == "call" and label is not None:
        reporter = item.config.pluginmanager.get_plugin("terminalreporter")
        status = "PASS" if rep.passed else "FAIL"
        if reporter is not None:
            reporter.write_line(f"ACCEPTANCE {status}: {label} ({rep.duration:.1f}s)")


@pytest.fixture
def tiny_vocab() -> Vocab:
    return Vocab(list(SPECIAL_TOKENS) + list("abcdefgh"))


@pytest.fixture
def tiny_config(tiny_vocab) -> ModelConfig:
    return ModelConfig(vocab_size=len(tiny_vocab), d_model=16, n_heads=2,
                       n_enc_layers=2, n_dec_layers=2, max_src_len=32,
                       max_tgt_len=8, d_ff=24, seed=7)


@pytest.fixture
def tiny_params(tiny_config) -> ModelParams:
    return ModelParams.initialize(tiny_config)


def central_diff(fn, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Finite-difference gradient of scalar fn() w.r.t. every entry of arr.

    ``fn`` must recompute from scratch reading ``arr`` (mutated in place).
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = fn()
        flat[i] = orig - h
        minus = fn()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())
