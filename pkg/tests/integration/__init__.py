"""Integration tests for the FiberFEM pipeline and command line."""
