"""Manifests and result writers"""
