"""Stream items and the JSON-lines dataset format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Union


@dataclass(frozen=True)
class StreamItem:
    id: str
    text: str
    label: int
    timestamp: Union[int, str]

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "text": self.text, "class": self.label, "timestamp": self.timestamp},
            ensure_ascii=False,
        )


def timestamp_key(ts) -> float:
    """Sortable key for an integer or ISO-8601 timestamp (naive = UTC)."""
    if isinstance(ts, bool):
        raise ValueError(f"invalid timestamp {ts!r}")
    if isinstance(ts, int):
        return float(ts)
    if isinstance(ts, str):
        text = ts.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(text)
        except ValueError:
            raise ValueError(f"invalid ISO-8601 timestamp {ts!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()
    raise ValueError(f"invalid timestamp {ts!r}")


def load_jsonl(path) -> list[StreamItem]:
    items = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item = StreamItem(str(obj["id"]), obj["text"], obj["class"], obj["timestamp"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
            if not isinstance(item.text, str):
                raise ValueError(f"{path}:{lineno}: text must be a string")
            if not isinstance(item.label, int) or isinstance(item.label, bool):
                raise ValueError(f"{path}:{lineno}: class must be an integer")
            timestamp_key(item.timestamp)
            if item.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    return items


def write_jsonl(path, items: Iterable[StreamItem]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(item.to_json() + "\n")
