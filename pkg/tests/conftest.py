"""Shared test configuration.

The k > sqrt(n)/log^2(n) advisory (filtered in pyproject) fires for most
deliberately extreme test runs; test_k_threshold_warning asserts it exists.
"""
