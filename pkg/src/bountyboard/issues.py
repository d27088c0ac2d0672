"""Validation issues reported as values (never raised mid-scan)."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    where: str = ""

    def __str__(self) -> str:
        loc = f" at {self.where}" if self.where else ""
        return f"[{self.code}]{loc}: {self.message}"

    def to_json_obj(self) -> dict:
        return {"code": self.code, "message": self.message, "where": self.where}
