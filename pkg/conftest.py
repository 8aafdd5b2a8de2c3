import os
import sys

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo property checks taking more than a few seconds")
    config.addinivalue_line("markers", "acceptance: desk-scale scaling experiments (minutes)")
