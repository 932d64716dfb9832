"""Versioned prompt texts shipped with the package."""

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    text = resources.files(__name__).joinpath(f"{name}.txt").read_text()
    return "\n".join(l for l in text.splitlines() if not l.startswith("# prompt-version")).strip()


def prompt_version(name: str) -> int:
    first = resources.files(__name__).joinpath(f"{name}.txt").read_text().splitlines()[0]
    return int(first.split(":")[1])
