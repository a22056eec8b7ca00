"""Integration tests for pipeline components."""





