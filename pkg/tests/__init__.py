"""Tests for the fivestar package."""
