import pytest

from triscope import backends


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the JIT kernels once so timing assertions measure steady state."""
    backends.warmup()
