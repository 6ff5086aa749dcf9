"""Semiparametric fitting pipelines."""
