"""Tests for FiberFEM."""
