"""Tests for the Apify hackathon project."""
