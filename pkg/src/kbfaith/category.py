"""Closed set of entity type categories shared by the KB and the linker."""

from __future__ import annotations

from enum import Enum


class Category(str, Enum):
    LOCATION = "location"
    PERSON = "person"
    ORGANIZATION = "organization"
    EVENT = "event"
    ART = "art"
    CONSUMER_GOOD = "consumer_good"
    OTHER = "other"

    @classmethod
    def parse(cls, value: str) -> "Category":
        try:
            return cls(value.strip().lower())
        except ValueError:
            allowed = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown category {value!r} (expected one of: {allowed})") from None

    def __str__(self) -> str:
        return self.value


def parse_categories(values) -> frozenset[Category]:
    """Parse a comma-separated string or an iterable of names into categories."""
    if values is None:
        return frozenset()
    if isinstance(values, str):
        values = [v for v in values.split(",") if v.strip()]
    return frozenset(v if isinstance(v, Category) else Category.parse(v) for v in values)
