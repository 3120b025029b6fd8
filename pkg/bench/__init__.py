# bench/__init__.py
"""
Experiment orchestration: presets and config loading, batched seeded runs,
threshold summaries and trace CSV integrity checks.
"""
