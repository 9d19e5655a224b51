"""Service layer: network engine, sensitivity, data, audit, monitor, experiments."""
