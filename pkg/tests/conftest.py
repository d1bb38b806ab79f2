import numpy as np
import pytest

import sjde


@pytest.fixture(scope="session")
def demo_cfg():
    return sjde.lqg_demo_config()


@pytest.fixture(scope="session")
def cr_cfg():
    scenario = sjde.CognitiveRadioScenario(
        n_users=2,
        channel_means=np.full(4, 1.0),
        channel_variances=np.full(4, 0.5),
        noise_variance=1.0,
        p_max=1.0,
        interference_limit_1=0.5,
        interference_limit_2=0.5,
    )
    return sjde.cognitive_radio_config(scenario)


@pytest.fixture(scope="session")
def ieee4_cfg():
    return sjde.smart_grid_ieee4_config()


def accumulate(model, truth, seed, steps):
    """Simulate a stream and fold it into sufficient statistics."""
    stream = sjde.simulate_stream(model, truth, seed, steps)
    stats = sjde.zero_stats(model.n_params)
    history = []
    for y, H in stream.pairs:
        stats = sjde.update_sufficient_stats(stats, H, y)
        history.append((y, H))
    return stats, stream, history
