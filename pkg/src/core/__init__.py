"""Overlap, potential, cumulant, estimator and oracle modules"""
