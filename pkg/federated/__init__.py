# federated/__init__.py
"""
Federated nonconvex optimization simulator: objectives, client-selection
accounting, gradient estimators, the inexact composite gradient method and
reference baselines.
"""
