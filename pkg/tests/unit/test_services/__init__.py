"""Unit tests for services."""





