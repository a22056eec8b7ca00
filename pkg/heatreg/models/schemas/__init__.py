"""Pydantic schemas for annotations, poses, reports and fits."""
