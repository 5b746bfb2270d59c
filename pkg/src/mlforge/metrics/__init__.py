"""Metric ingestion, queries, CSV export and live fan-out."""

from mlforge.metrics.store import MetricPoint, MetricStore, Subscription

__all__ = ["MetricPoint", "MetricStore", "Subscription"]
