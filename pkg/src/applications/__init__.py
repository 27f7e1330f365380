"""Worked models and reproducible experiments"""
