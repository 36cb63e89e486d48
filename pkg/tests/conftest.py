import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

import run_registry  # noqa: E402

run_registry.install()


def pytest_collection_modifyitems(config, items):
    # acceptance inspects audits recorded by the other modules, so it goes last
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
