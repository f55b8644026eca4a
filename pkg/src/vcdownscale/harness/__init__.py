"""Command-line interface, configuration, ingestion, scenario presets and study runner."""
