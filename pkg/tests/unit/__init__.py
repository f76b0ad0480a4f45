"""Unit tests for FiberFEM modules."""
