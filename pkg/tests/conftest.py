import numpy as np
import pytest
import torch

from mdfloss.mdf import DiscriminatorStack
from mdfloss.networks import PatchDiscriminator


def random_image(h, w, c=1, seed=0):
    return np.random.default_rng(seed).random((h, w, c))


def smooth_image(h, w, c=1, seed=0):
    """Random but spatially correlated image in [0, 1]."""
    from scipy.ndimage import gaussian_filter

    x = gaussian_filter(np.random.default_rng(seed).random((h, w, c)), (2, 2, 0))
    x = (x - x.min()) / (x.max() - x.min())
    return 0.1 + 0.8 * x


def random_stack(scales=3, channels=1, width=8, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    discs = [PatchDiscriminator(channels, width, generator=g) for _ in range(scales)]
    return DiscriminatorStack(discs, {"task": {"task": "denoise"}}).to(dtype)


@pytest.fixture
def stack():
    return random_stack()


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("MDF_CACHE", str(tmp_path_factory.getbasetemp() / "mdf-cache"))


# --- acceptance reporting ---------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """record(n, ok, detail) stores one acceptance verdict and asserts it."""

    def _record(n: int, ok: bool, detail: str):
        ACCEPTANCE[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
