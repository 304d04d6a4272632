"""Tests package for the tensor fusion toolkit."""
