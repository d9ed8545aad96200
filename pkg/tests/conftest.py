import numpy as np
import pytest

from moac.model import ChannelConfig


def brute_force_samples(cfg, s):
    """y_m[i] = sum_k h_k s_k[i - [k > m]] by direct enumeration, s_k[0] = s_k[L+1] = 0."""
    M, L = cfg.M, cfg.L
    s = np.asarray(s)
    y = []
    for i in range(1, L + 2):
        for m in range(1, M + 1):
            if i == L + 1 and m == M:
                break
            acc = 0j
            for k in range(1, M + 1):
                slot = i - (1 if k > m else 0)
                if 1 <= slot <= L:
                    acc += cfg.h[k - 1] * s[k - 1, slot - 1]
            y.append(acc)
    return np.array(y)


def random_channel(rng, M, L, snr_db=np.inf, grid=None):
    return ChannelConfig.random(M, L, snr_db=snr_db, seed=rng, grid=grid)


@pytest.fixture
def toy():
    """M=2, L=2, h=[1, i] with s=[[1,3],[2,4]] (hand-worked example)."""
    cfg = ChannelConfig(M=2, L=2, tau=[0.0, 0.5], h=[1, 1j])
    s = np.array([[1.0, 3.0], [2.0, 4.0]])
    return cfg, s


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _CRITERIA[n] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
