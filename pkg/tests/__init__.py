"""Tests for upsense."""
