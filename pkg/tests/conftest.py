import pytest

from svib.config import RunConfig


@pytest.fixture
def tiny_config():
    """Small but complete config for quick trainer runs."""

    def make(variant="svib_uniform", seed=0, **optim):
        c = RunConfig(variant=variant, seed=seed)
        c.env.d_pad = 10
        c.model.encoder_hidden = [8]
        c.model.head_hidden = [8]
        c.model.d_z = 3
        c.svgd.num_particles = 4
        c.optim.num_envs = 2
        c.optim.rollout_length = 3
        c.optim.total_updates = 6
        c.optim.checkpoint_every = 3
        c.optim.return_window = 2
        c.probe.interval = 3
        c.probe.steps = 5
        c.probe.hidden = 8
        for k, v in optim.items():
            setattr(c.optim, k, v)
        return c

    return make


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
