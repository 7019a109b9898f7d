"""Snapshot compressive imaging: simulation, reconstruction, verification."""
