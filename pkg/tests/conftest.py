import pytest

from mobysim.trace import DAY, SyntheticConfig, generate_synthetic, parse_sessions

# A=0 meets C=2 at location 0 from t=10, C meets B=1 at location 1 from t=20.
# Time fractions: A=(1,0), C=(0.5,0.5), B=(0,1).
HAND_TRACE = """\
# node,location,start,end
0,0,0,15
2,0,10,15
2,1,20,25
1,1,20,30
"""


@pytest.fixture
def hand_trace():
    return parse_sessions(HAND_TRACE)


def small_config(seed=0, **kw):
    base = dict(node_count=10, location_count=4, duration=DAY, zipf_exponent=1.2,
                mean_session_duration=1800, sessions_per_day=12.0, seed=seed)
    base.update(kw)
    return SyntheticConfig(**base)


@pytest.fixture
def small_trace():
    return generate_synthetic(small_config())


@pytest.fixture(scope="session")
def medium_trace():
    return generate_synthetic(SyntheticConfig(node_count=60, location_count=12, duration=4 * DAY,
                                              zipf_exponent=1.5, mean_session_duration=3600,
                                              sessions_per_day=6.0, seed=11, activity_spread=0.5))
