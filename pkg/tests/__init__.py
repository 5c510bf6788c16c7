"""Test suite for Tiøren API."""
